"""Build script for the optional Cython kernels.

The package works without the extension; ``cascademap.kernels`` falls back
to the numpy implementations when ``cascademap._ckernels`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CASCADEMAP_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "cascademap._ckernels",
                    ["src/cascademap/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
