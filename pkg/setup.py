"""Build script: compiles the optional fast kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed. `pip install -e .
--no-build-isolation` builds it in place.
"""
import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "gridsynth.nn._kernel",
                ["src/gridsynth/nn/_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=extensions)
