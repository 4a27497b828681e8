"""Build script for the compiled rasterization kernels.

The extension is optional: if it cannot be built, the package falls back to
the pure-Python kernels in ``lowsplat._kernels._pure`` at import time.

Floating-point contraction is disabled so the compiled kernels produce
bit-identical results to the pure-Python reference (same IEEE-754 double
operations, same libm exp).
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "lowsplat._kernels._core",
        sources=["src/lowsplat/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, language_level=3) if cythonize else [],
)
