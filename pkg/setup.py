"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure NumPy fallback is selected
at import time); building it just makes the hot training kernels faster.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ncrank.kernels._native",
                ["src/ncrank/kernels/_native.pyx"],
                # FP contraction off: compiled float kernels must round
                # exactly like the NumPy reference (no FMA fusion).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
