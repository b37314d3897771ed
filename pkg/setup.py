"""Build hook for the optional compiled geometry kernels.

The extension is skipped when Cython is unavailable; the package then runs on
the pure-Python kernels.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("TUNNELPARK_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "tunnelpark._kernels",
                    ["src/tunnelpark/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
