"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected at
import time); the extension exists because the windowed-LSTM and joint
attention inner loops dominate training time and are several times faster in C.
"""
import sys

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# -ffast-math lets gcc vectorize the exp/tanh gate loops through libmvec on
# glibc systems; elsewhere the plain libm symbols are used.
link_args = ["-lm"]
if sys.platform == "linux":
    link_args = ["-lmvec", "-lm"]

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "seqrisk._kernels",
        ["src/seqrisk/_kernels.pyx"],
        extra_compile_args=["-O3", "-ffast-math"],
        extra_link_args=link_args,
        optional=True,  # fall back to the pure-python backend if the build fails
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
