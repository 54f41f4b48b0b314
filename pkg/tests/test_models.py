"""Model families: validation, dust classification, Laplace exponents,
parsing and formatting."""

import math
from fractions import Fraction as F

import pytest

from coaldual.models import (
    BetaLambda,
    DiracNu,
    Dirichlet,
    Kingman,
    LambdaAtoms,
    PoissonDirichlet,
    coverage_mass,
    dust_classification,
    finite_coverage_mass,
    format_model,
    is_exact_model,
    laplace_exponent,
    no_dust_intensity,
    parse_model,
    validate,
)
from coaldual.paintbox import MassPoint


class TestValidation:
    def test_valid_models_pass_through(self):
        for m in [
            Kingman(),
            BetaLambda(2, F(1, 2)),
            LambdaAtoms([(F(1, 2), 1)], kingman_mass=F(1, 3)),
            LambdaAtoms([], kingman_mass=2),
            DiracNu(MassPoint((F(1, 2), F(1, 4)))),
            Dirichlet(3, F(1, 2)),
            PoissonDirichlet(F(1, 2), 1),
            PoissonDirichlet(0, 1),
            PoissonDirichlet(F(1, 2), 0),
        ]:
            assert validate(m) is m

    @pytest.mark.parametrize("bad", [
        BetaLambda(0, 1),
        BetaLambda(1, -2),
        LambdaAtoms([]),
        LambdaAtoms([(0, 1)]),
        LambdaAtoms([(F(3, 2), 1)]),
        LambdaAtoms([(F(1, 2), 0)]),
        LambdaAtoms([(F(1, 2), 1)], kingman_mass=-1),
        DiracNu(MassPoint((F(1, 2),)), weight=0),
        Dirichlet(0, 1),
        Dirichlet(-2, 1),
        Dirichlet(3, 0),
        PoissonDirichlet(1, 1),
        PoissonDirichlet(-F(1, 10), 1),
        PoissonDirichlet(F(1, 2), -1),
        PoissonDirichlet(0, 0),
    ])
    def test_bad_parameters_raise(self, bad):
        with pytest.raises(ValueError):
            validate(bad)

    def test_dirichlet_rejects_non_integer_n(self):
        with pytest.raises(ValueError):
            validate(Dirichlet(F(5, 2), 1))

    def test_exactness_detection(self):
        assert is_exact_model(Dirichlet(3, F(1, 2)))
        assert not is_exact_model(Dirichlet(3, 0.5))
        assert is_exact_model(Kingman())
        assert not is_exact_model(PoissonDirichlet(0.3, 1))
        assert not is_exact_model(DiracNu(MassPoint((0.5,))))
        assert is_exact_model(DiracNu(MassPoint((F(1, 2),))))


class TestCoverageMass:
    def test_zero_for_measures_on_improper_paintboxes(self):
        for m in [Kingman(), BetaLambda(2, 3), PoissonDirichlet(F(1, 2), 1)]:
            for j in range(0, 5):
                assert coverage_mass(m, j) == 0
            assert finite_coverage_mass(m) == 0

    def test_dirichlet_steps_at_part_count(self):
        d = Dirichlet(3, F(1, 2))
        assert [coverage_mass(d, j) for j in range(6)] == [0, 0, 0, 1, 1, 1]
        assert finite_coverage_mass(d) == 1

    def test_dirac_point_steps_at_support(self):
        proper = DiracNu(MassPoint((F(1, 2), F(1, 2))), weight=F(3, 2))
        assert [coverage_mass(proper, j) for j in range(4)] == [0, 0, F(3, 2), F(3, 2)]
        dusty = DiracNu(MassPoint((F(1, 2), F(1, 4))))
        assert all(coverage_mass(dusty, j) == 0 for j in range(6))
        assert finite_coverage_mass(dusty) == 0

    def test_atom_at_one_carries_full_coverage(self):
        m = LambdaAtoms([(1, F(2, 3)), (F(1, 2), 5)])
        assert coverage_mass(m, 1) == F(2, 3)
        assert coverage_mass(m, 4) == F(2, 3)
        assert coverage_mass(m, 0) == 0
        assert finite_coverage_mass(m) == F(2, 3)

    def test_no_dust_intensity_counts_all_paintbox_mass(self):
        assert no_dust_intensity(Dirichlet(4, 1)) == 1
        assert no_dust_intensity(PoissonDirichlet(F(1, 2), 2)) == 1
        assert no_dust_intensity(DiracNu(MassPoint((F(1, 2), F(1, 2))), 3)) == 3
        assert no_dust_intensity(DiracNu(MassPoint((F(1, 2), F(1, 4))), 3)) == 0
        assert no_dust_intensity(Kingman()) == 0


class TestDustClassification:
    def test_kingman(self):
        r = dust_classification(Kingman())
        assert (r.has_dust, r.comes_down_from_infinity,
                r.stays_infinite, r.fixation_line_explodes) == (
            False, True, False, True)

    def test_beta_dust_threshold(self):
        assert dust_classification(BetaLambda(F(3, 2), 1)).has_dust
        assert not dust_classification(BetaLambda(F(1, 2), 1)).has_dust
        assert not dust_classification(BetaLambda(1, 1)).has_dust

    def test_finite_support_families(self):
        r = dust_classification(Dirichlet(3, 1))
        assert (r.has_dust, r.comes_down_from_infinity,
                r.stays_infinite, r.fixation_line_explodes) == (
            True, False, False, True)
        r = dust_classification(PoissonDirichlet(F(1, 2), 1))
        assert (r.has_dust, r.comes_down_from_infinity,
                r.stays_infinite, r.fixation_line_explodes) == (
            True, False, True, False)

    def test_dirac_proper_vs_dusty(self):
        r = dust_classification(DiracNu(MassPoint((F(1, 2), F(1, 2)))))
        assert (r.stays_infinite, r.fixation_line_explodes) == (False, True)
        r = dust_classification(DiracNu(MassPoint((F(1, 2), F(1, 4)))))
        assert (r.stays_infinite, r.fixation_line_explodes) == (True, False)

    def test_atom_family_with_kingman_mass_loses_dust(self):
        r = dust_classification(LambdaAtoms([(F(1, 2), 1)], kingman_mass=1))
        assert not r.has_dust and r.comes_down_from_infinity
        r = dust_classification(LambdaAtoms([(F(1, 2), 1)]))
        assert r.has_dust


class TestLaplaceExponent:
    def test_no_dust_raises(self):
        with pytest.raises(ValueError):
            laplace_exponent(Kingman(), 1.0)
        with pytest.raises(ValueError):
            laplace_exponent(BetaLambda(1, 1), 2.0)

    def test_zero_at_zero(self):
        for m in [Dirichlet(3, 1), PoissonDirichlet(F(1, 2), 1),
                  DiracNu(MassPoint((F(1, 2), F(1, 4))))]:
            assert laplace_exponent(m, 0) == 0.0

    def test_flat_for_probability_measures(self):
        for eta in [0.5, 1, 7.25]:
            assert laplace_exponent(Dirichlet(5, F(1, 3)), eta) == 1.0
            assert laplace_exponent(PoissonDirichlet(F(1, 2), 2), eta) == 1.0

    def test_dirac_closed_form(self):
        m = DiracNu(MassPoint((F(1, 2), F(1, 4))), weight=F(3, 2))
        # coverage 3/4, dust 1/4
        for eta in [0.5, 1.0, 3.0]:
            assert laplace_exponent(m, eta) == pytest.approx(
                1.5 * (1.0 - 0.25 ** eta), rel=1e-14)
        proper = DiracNu(MassPoint((F(1, 2), F(1, 2))), weight=2)
        assert laplace_exponent(proper, 4.0) == pytest.approx(2.0)

    def test_beta_closed_form_value(self):
        # with density weight x^(a-3) (1-x)^(b-1) / B(a, b) against eta = 1
        # the a = 3, b = 1 case integrates to 3/2
        assert laplace_exponent(BetaLambda(3, 1), 1.0) == pytest.approx(
            1.5, rel=1e-12)

    def test_beta_routes_match_hand_integrated_values(self):
        from coaldual.models import _beta_laplace

        # integer eta makes the binomial expansion finite, so these
        # integrate by hand to rationals
        for a, b, eta, ref in [(3, 1, 1.0, F(3, 2)),
                               (2.5, 2, 2.0, F(11, 3)),
                               (1.5, 1, 1.0, 3),
                               (1.2, 2, 3.0, F(243, 8))]:
            direct = _beta_laplace(float(a), float(b), float(eta))
            assert direct == pytest.approx(float(ref), rel=1e-9)

    def test_beta_quadrature_satisfies_shift_identity(self):
        from scipy.special import betaln

        from coaldual.models import _beta_laplace

        # raising eta by one adds exactly B(a-1, b+eta)/B(a, b)
        for a, b, eta in [(1.5, 1.0, 0.7), (1.2, 2.0, 0.3), (1.9, 0.5, 1.3)]:
            lhs = _beta_laplace(a, b, eta + 1.0) - _beta_laplace(a, b, eta)
            rhs = math.exp(betaln(a - 1.0, b + eta) - betaln(a, b))
            assert lhs == pytest.approx(rhs, rel=1e-8)

    def test_beta_needs_dust(self):
        with pytest.raises(ValueError):
            laplace_exponent(BetaLambda(F(1, 2), 1), 1.0)

    def test_atom_family_closed_form(self):
        m = LambdaAtoms([(F(1, 2), F(1, 8))])
        # nu weight w / x^2 = 1/2 at a paintbox with dust 1/2
        assert laplace_exponent(m, 2.0) == pytest.approx(0.5 * (1 - 0.25))


class TestParsing:
    @pytest.mark.parametrize("text,expected", [
        ("kingman", Kingman()),
        ("beta:a=2,b=1", BetaLambda(2, 1)),
        ("beta:a=0.5,b=1.5", BetaLambda(F(1, 2), F(3, 2))),
        ("dirichlet:N=3,alpha=1/2", Dirichlet(3, F(1, 2))),
        ("pd:alpha=0.5,theta=1", PoissonDirichlet(F(1, 2), 1)),
        ("pd:alpha=0,theta=2", PoissonDirichlet(0, 2)),
        ("dirac-nu:x=1/2,1/4;w=3/2",
         DiracNu(MassPoint((F(1, 2), F(1, 4))), F(3, 2))),
        ("lambda-atoms:k0=1;1/2:2", LambdaAtoms([(F(1, 2), 2)], kingman_mass=1)),
        ("lambda-atoms:1:1", LambdaAtoms([(1, 1)])),
    ])
    def test_roundtrip(self, text, expected):
        m = parse_model(text)
        assert m == expected
        assert parse_model(format_model(m)) == m

    def test_decimals_become_fractions(self):
        m = parse_model("pd:alpha=0.5,theta=1")
        assert m.alpha == F(1, 2) and isinstance(m.alpha, F)
        assert is_exact_model(m)

    def test_long_decimals_stay_float(self):
        m = parse_model("pd:alpha=0.3141592653589793,theta=1")
        assert isinstance(m.alpha, float)

    @pytest.mark.parametrize("bad", [
        "dirichlet:N=0,alpha=1",
        "dirichlet:N=2.5,alpha=1",
        "dirichlet:N=2",
        "dirichlet:N=2,alpha=1,extra=3",
        "beta:a=1",
        "pd:alpha=1,theta=1",
        "kingman:x=1",
        "mystery:a=1",
        "dirac-nu:x=0.9,0.3;w=1",
        "beta:a=one,b=1",
    ])
    def test_bad_specs_raise(self, bad):
        with pytest.raises(ValueError):
            parse_model(bad)

    def test_format_is_canonical(self):
        assert format_model(Dirichlet(3, F(1, 2))) == "dirichlet:N=3,alpha=1/2"
        assert format_model(Kingman()) == "kingman"
        assert format_model(BetaLambda(2.5, 1)) == "beta:a=2.5,b=1"
