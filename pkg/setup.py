# Builds the optional compiled loss-kernel extension. A failed build is not
# fatal: tokcast._kernels falls back to the pure-numpy backend at import.
#
# Local rebuild: python setup.py build_ext --inplace

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "tokcast._kernels._core",
        sources=["src/tokcast/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_9_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level="3") if cythonize else [])
