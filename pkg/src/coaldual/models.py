"""Model catalogue for exchangeable coalescents.

Six families are supported, each defined through its coalescence
measure: the Kingman coalescent, Beta and finite-atom Lambda
coalescents, a single-paintbox family (one mass point with a weight),
the Dirichlet coalescent with N symmetric parts, and the
Poisson-Dirichlet coalescent.  The module validates parameters,
computes the intensity the driving measure puts on fully covering
paintboxes, classifies dust and boundary behaviour, evaluates the
Laplace exponent of the dust frequency, and parses the command-line
model grammar.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from scipy import integrate
from scipy.special import betaln

from .stirling import ExactScalar

__all__ = [
    "BetaLambda",
    "CoalescentModel",
    "DiracNu",
    "Dirichlet",
    "DustReport",
    "Kingman",
    "LambdaAtoms",
    "PoissonDirichlet",
    "coverage_mass",
    "dust_classification",
    "finite_coverage_mass",
    "format_model",
    "laplace_exponent",
    "no_dust_intensity",
    "parse_model",
    "validate",
]

Scalar = Union[int, float, Fraction]


@dataclass(frozen=True)
class Kingman:
    """Pure binary mergers at unit pair rate."""


@dataclass(frozen=True)
class BetaLambda:
    """Lambda coalescent driven by a Beta(a, b) measure on (0, 1)."""

    a: Scalar
    b: Scalar


@dataclass(frozen=True)
class LambdaAtoms:
    """Lambda measure with finitely many atoms plus optional Kingman mass.

    ``atoms`` is a sequence of (x, w) pairs with x in (0, 1] and
    weight w > 0; ``kingman_mass`` is the mass the Lambda measure puts
    at zero.
    """

    atoms: tuple
    kingman_mass: Scalar = 0

    def __init__(self, atoms, kingman_mass: Scalar = 0):
        object.__setattr__(self, "atoms", tuple((x, w) for x, w in atoms))
        object.__setattr__(self, "kingman_mass", kingman_mass)


@dataclass(frozen=True)
class DiracNu:
    """Driving measure concentrated on a single paintbox with a weight."""

    point: "MassPoint"
    weight: Scalar = 1


@dataclass(frozen=True)
class Dirichlet:
    """Paintboxes drawn from a symmetric N-part Dirichlet(alpha) law."""

    N: int
    alpha: Scalar


@dataclass(frozen=True)
class PoissonDirichlet:
    """Paintboxes drawn from the Poisson-Dirichlet(alpha, theta) law."""

    alpha: Scalar
    theta: Scalar


CoalescentModel = Union[Kingman, BetaLambda, LambdaAtoms, DiracNu,
                        Dirichlet, PoissonDirichlet]


def validate(model: CoalescentModel) -> CoalescentModel:
    """Check model parameters, returning the model; raises ValueError."""
    from .paintbox import MassPoint

    if isinstance(model, Kingman):
        return model
    if isinstance(model, BetaLambda):
        if not model.a > 0:
            raise ValueError(f"Beta parameter a must be positive, got {model.a}")
        if not model.b > 0:
            raise ValueError(f"Beta parameter b must be positive, got {model.b}")
        return model
    if isinstance(model, LambdaAtoms):
        if not model.kingman_mass >= 0:
            raise ValueError(
                f"Kingman mass must be nonnegative, got {model.kingman_mass}")
        if not model.atoms and not model.kingman_mass > 0:
            raise ValueError("atom family needs at least one atom or Kingman mass")
        for x, w in model.atoms:
            if not 0 < x <= 1:
                raise ValueError(f"atom location must lie in (0, 1], got {x}")
            if not w > 0:
                raise ValueError(f"atom weight must be positive, got {w}")
        return model
    if isinstance(model, DiracNu):
        if not isinstance(model.point, MassPoint):
            raise ValueError("DiracNu needs a MassPoint")
        if not model.weight > 0:
            raise ValueError(f"DiracNu weight must be positive, got {model.weight}")
        return model
    if isinstance(model, Dirichlet):
        if not isinstance(model.N, int) or model.N < 1:
            raise ValueError(f"Dirichlet needs integer N >= 1, got {model.N}")
        if not model.alpha > 0:
            raise ValueError(f"Dirichlet alpha must be positive, got {model.alpha}")
        return model
    if isinstance(model, PoissonDirichlet):
        if not 0 <= model.alpha < 1:
            raise ValueError(
                f"Poisson-Dirichlet alpha must lie in [0, 1), got {model.alpha}")
        if not model.theta > -model.alpha:
            raise ValueError(
                f"Poisson-Dirichlet theta must exceed -alpha, got {model.theta}")
        if model.alpha == 0 and model.theta == 0:
            raise ValueError("Poisson-Dirichlet needs alpha or theta nonzero")
        return model
    raise ValueError(f"not a coalescent model: {model!r}")


def is_exact_model(model: CoalescentModel) -> bool:
    """True when every parameter is an int or Fraction."""
    if isinstance(model, Kingman):
        return True
    if isinstance(model, BetaLambda):
        return all(isinstance(v, ExactScalar) for v in (model.a, model.b))
    if isinstance(model, LambdaAtoms):
        vals = [model.kingman_mass]
        for x, w in model.atoms:
            vals += [x, w]
        return all(isinstance(v, ExactScalar) for v in vals)
    if isinstance(model, DiracNu):
        return isinstance(model.weight, ExactScalar) and model.point.is_exact
    if isinstance(model, Dirichlet):
        return isinstance(model.alpha, ExactScalar)
    if isinstance(model, PoissonDirichlet):
        return all(isinstance(v, ExactScalar) for v in (model.alpha, model.theta))
    raise ValueError(f"not a coalescent model: {model!r}")


def coverage_mass(model: CoalescentModel, j: int):
    """Intensity of paintboxes whose first j parts carry all the mass.

    This is the rate at which the fixation line jumps from state j to
    infinity, and the limit of the cumulative transition rates out of
    large block counts into {1..j}.  For Lambda families only the atom
    at x = 1 contributes (a single part covering everything), for the
    Dirichlet family the whole intensity sits on N parts, and the
    Poisson-Dirichlet law a.s. needs infinitely many parts.
    """
    if j < 0:
        raise ValueError(f"coverage index must be >= 0, got {j}")
    if j == 0:
        return 0
    if isinstance(model, (Kingman, BetaLambda)):
        return 0
    if isinstance(model, LambdaAtoms):
        total = 0
        for x, w in model.atoms:
            if x == 1:
                total = total + w  # nu weight w / x^2 at x = 1
        return total
    if isinstance(model, DiracNu):
        p = model.point
        if p.is_proper and p.support_size <= j:
            return model.weight
        return 0
    if isinstance(model, Dirichlet):
        return 1 if j >= model.N else 0
    if isinstance(model, PoissonDirichlet):
        return 0
    raise ValueError(f"not a coalescent model: {model!r}")


def finite_coverage_mass(model: CoalescentModel):
    """Intensity of paintboxes with finitely many parts and no dust.

    The limit of ``coverage_mass(model, j)`` as j grows; its negative
    is the generator diagonal at the infinite state.
    """
    if isinstance(model, DiracNu):
        return model.weight if model.point.is_proper else 0
    if isinstance(model, Dirichlet):
        return coverage_mass(model, model.N)
    return coverage_mass(model, 1) if isinstance(model, LambdaAtoms) else 0


def no_dust_intensity(model: CoalescentModel):
    """Total intensity of dust-free paintboxes (parts summing to 1)."""
    if isinstance(model, (Kingman, BetaLambda)):
        # an atom of Lambda at 1 would contribute; the Beta density has none
        return 0
    if isinstance(model, LambdaAtoms):
        return finite_coverage_mass(model)
    if isinstance(model, DiracNu):
        return model.weight if model.point.is_proper else 0
    if isinstance(model, (Dirichlet, PoissonDirichlet)):
        return 1
    raise ValueError(f"not a coalescent model: {model!r}")


@dataclass(frozen=True)
class DustReport:
    """Dust and boundary classification of one model.

    ``None`` fields mean the classification is not decided here.
    """

    has_dust: bool
    comes_down_from_infinity: Optional[bool]
    stays_infinite: Optional[bool]
    fixation_line_explodes: Optional[bool]
    no_dust_intensity: object


def dust_classification(model: CoalescentModel) -> DustReport:
    """Classify dust, behaviour at infinity, and line explosion.

    Only classifications that follow from the structure of the family
    are filled in; Beta and atom families outside the classical cases
    report ``None`` rather than guessing.
    """
    validate(model)
    star = no_dust_intensity(model)
    if isinstance(model, Kingman):
        return DustReport(False, True, False, True, star)
    if isinstance(model, BetaLambda):
        a = float(model.a)
        return DustReport(a > 1, None, None, None, star)
    if isinstance(model, LambdaAtoms):
        if model.kingman_mass > 0:
            # the Kingman part alone brings the count down
            return DustReport(False, True, False, True, star)
        explodes = True if star > 0 else None
        return DustReport(True, None, None, explodes, star)
    if isinstance(model, DiracNu):
        if model.point.is_proper:
            # one event takes any state to a finite one, but nothing
            # drags the count down instantaneously
            return DustReport(True, False, False, True, star)
        return DustReport(True, False, True, False, star)
    if isinstance(model, Dirichlet):
        return DustReport(True, False, False, True, star)
    if isinstance(model, PoissonDirichlet):
        return DustReport(True, False, True, False, star)
    raise ValueError(f"not a coalescent model: {model!r}")


def laplace_exponent(model: CoalescentModel, eta) -> float:
    """Laplace exponent of the limiting dust frequency at eta >= 0.

    Phi(eta) is the integral of 1 - (1 - |x|)^eta against the driving
    measure.  It determines the limit of the scaled block count
    through E[S_t^eta] = exp(-t Phi(eta)).  Models without dust have
    no such limit and raise.

    For the families whose driving measure is a probability law on
    dust-free paintboxes the exponent is flat: Phi(eta) equals the
    total intensity for every eta > 0 and Phi(0) = 0.
    """
    report = dust_classification(model)
    if not report.has_dust:
        raise ValueError(
            f"{type(model).__name__} has no dust; the scaled block count "
            "has no nondegenerate frequency limit")
    e = float(eta)
    if e < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    if e == 0.0:
        return 0.0
    if isinstance(model, (Dirichlet, PoissonDirichlet)):
        return 1.0
    if isinstance(model, DiracNu):
        w, x0 = float(model.weight), float(model.point.dust)
        if x0 == 0.0:
            return w
        return w * (1.0 - x0 ** e)
    if isinstance(model, LambdaAtoms):
        total = 0.0
        for x, wt in model.atoms:
            xf, wf = float(x), float(wt)
            total += wf / xf ** 2 * (1.0 - (1.0 - xf) ** e)
        return total
    if isinstance(model, BetaLambda):
        return _beta_laplace(float(model.a), float(model.b), e)
    raise ValueError(f"not a coalescent model: {model!r}")


#: absolute tolerance for the Beta quadrature fallback
QUAD_ABS_TOL = 1e-10


def _beta_laplace(a: float, b: float, eta: float) -> float:
    """Phi(eta) for Beta(a, b), a > 1; closed form when a > 2."""
    if a > 2:
        lb = betaln(a, b)
        return (math.exp(betaln(a - 2, b) - lb)
                - math.exp(betaln(a - 2, b + eta) - lb))

    norm = math.exp(-betaln(a, b))

    # write the integrand as g(x) x^(a-2) (1-x)^(b-1) with g smooth and
    # bounded, and hand both endpoint exponents to the algebraic-weight
    # rule, which integrates them without seeing a singularity
    def smooth(x):
        if x < 1e-8:
            return norm * eta
        if x >= 1.0:
            return norm
        return norm * -math.expm1(eta * math.log1p(-x)) / x

    val, err = integrate.quad(smooth, 0.0, 1.0, weight="alg",
                              wvar=(a - 2.0, b - 1.0),
                              epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=200)
    if err > 10 * QUAD_ABS_TOL + 1e-12 * abs(val):
        raise ArithmeticError(
            f"Beta Laplace quadrature error {err:.2e} above tolerance")
    return val


_NUMBER_MAX_DEN = 10 ** 6


def _parse_number(text: str):
    """Parse a numeric literal, preferring an exact Fraction."""
    text = text.strip()
    try:
        f = Fraction(text)
        if f.denominator <= _NUMBER_MAX_DEN:
            return f.numerator if f.denominator == 1 else f
    except (ValueError, ZeroDivisionError):
        pass
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot parse number {text!r}")


def _parse_fields(body: str, spec: str):
    out = {}
    for item in body.split(","):
        if "=" not in item:
            raise ValueError(f"expected key=value in model spec {spec!r}")
        key, _, val = item.partition("=")
        out[key.strip()] = val.strip()
    return out


def parse_model(spec: str) -> CoalescentModel:
    """Parse a model description string.

    Grammar:

    - ``kingman``
    - ``beta:a=<num>,b=<num>``
    - ``lambda-atoms:k0=<num>;<x>:<w>[,<x>:<w>]*`` (``k0=`` optional)
    - ``dirac-nu:x=<num>[,<num>]*;w=<num>``
    - ``dirichlet:N=<int>,alpha=<num>``
    - ``pd:alpha=<num>,theta=<num>``

    Decimal literals with at most six fractional digits (and plain
    fractions like ``1/2``) parse to exact rationals, enabling the
    exact computation paths; anything else becomes a float.
    """
    from .paintbox import MassPoint

    spec = spec.strip()
    head, _, body = spec.partition(":")
    head = head.lower()
    if head == "kingman":
        if body:
            raise ValueError(f"kingman takes no parameters, got {body!r}")
        return validate(Kingman())
    if head == "beta":
        fields = _parse_fields(body, spec)
        if set(fields) != {"a", "b"}:
            raise ValueError(f"beta needs exactly a= and b=, got {sorted(fields)}")
        return validate(BetaLambda(_parse_number(fields["a"]),
                                   _parse_number(fields["b"])))
    if head == "lambda-atoms":
        k0 = 0
        atoms_part = body
        if body.startswith("k0="):
            k0_text, _, atoms_part = body.partition(";")
            k0 = _parse_number(k0_text[3:])
        atoms = []
        if atoms_part:
            for pair in atoms_part.split(","):
                if ":" not in pair:
                    raise ValueError(
                        f"atom entries look like x:w, got {pair!r}")
                x, _, w = pair.partition(":")
                atoms.append((_parse_number(x), _parse_number(w)))
        return validate(LambdaAtoms(atoms, kingman_mass=k0))
    if head == "dirac-nu":
        m = re.fullmatch(r"x=([^;]+);w=(.+)", body)
        if not m:
            raise ValueError(f"dirac-nu spec looks like x=<nums>;w=<num>, got {body!r}")
        parts = [_parse_number(tok) for tok in m.group(1).split(",")]
        point = MassPoint(parts)
        return validate(DiracNu(point=point, weight=_parse_number(m.group(2))))
    if head == "dirichlet":
        fields = _parse_fields(body, spec)
        if set(fields) != {"N", "alpha"}:
            raise ValueError(
                f"dirichlet needs exactly N= and alpha=, got {sorted(fields)}")
        n_val = _parse_number(fields["N"])
        if not isinstance(n_val, int):
            raise ValueError(f"dirichlet N must be an integer, got {fields['N']!r}")
        return validate(Dirichlet(N=n_val, alpha=_parse_number(fields["alpha"])))
    if head == "pd":
        fields = _parse_fields(body, spec)
        if set(fields) != {"alpha", "theta"}:
            raise ValueError(
                f"pd needs exactly alpha= and theta=, got {sorted(fields)}")
        return validate(PoissonDirichlet(alpha=_parse_number(fields["alpha"]),
                                         theta=_parse_number(fields["theta"])))
    raise ValueError(f"unknown model family {head!r}")


def _format_number(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    return repr(v) if isinstance(v, float) else str(v)


def format_model(model: CoalescentModel) -> str:
    """Canonical round-trippable description string."""
    fn = _format_number
    if isinstance(model, Kingman):
        return "kingman"
    if isinstance(model, BetaLambda):
        return f"beta:a={fn(model.a)},b={fn(model.b)}"
    if isinstance(model, LambdaAtoms):
        atoms = ",".join(f"{fn(x)}:{fn(w)}" for x, w in model.atoms)
        return f"lambda-atoms:k0={fn(model.kingman_mass)};{atoms}"
    if isinstance(model, DiracNu):
        xs = ",".join(fn(p) for p in model.point.parts)
        return f"dirac-nu:x={xs};w={fn(model.weight)}"
    if isinstance(model, Dirichlet):
        return f"dirichlet:N={model.N},alpha={fn(model.alpha)}"
    if isinstance(model, PoissonDirichlet):
        return f"pd:alpha={fn(model.alpha)},theta={fn(model.theta)}"
    raise ValueError(f"not a coalescent model: {model!r}")
