"""Build the optional compiled Monte Carlo core.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy implementation at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("OHLCVOL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "ohlcvol.montecarlo._core",
            ["src/ohlcvol/montecarlo/_core.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
