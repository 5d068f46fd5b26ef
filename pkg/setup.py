"""Build script for the optional compiled core.

The extension is optional: if Cython or a C compiler is unavailable the
package installs without it and falls back to the numpy implementation.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("GCLPR_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "gclpr._core",
                    ["src/gclpr/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
