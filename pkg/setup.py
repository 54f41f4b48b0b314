"""Build script.

The compiled path kernel is optional: if Cython or a C compiler is
unavailable the install proceeds and the package falls back to the
numpy implementation at import time.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/coaldual/_pathkern.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    include_dirs = [numpy.get_include()]
except Exception as exc:  # pragma: no cover
    print(f"warning: building without the compiled kernel ({exc})", file=sys.stderr)
    include_dirs = []

setup(
    ext_modules=ext_modules,
    include_dirs=include_dirs,
)
