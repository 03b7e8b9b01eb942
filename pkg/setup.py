"""Build script: compiles the Cython kernel core when possible.

Set FFCONTROL_NO_EXT=1 to skip compilation; the package then runs on the
pure numpy kernels selected automatically at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FFCONTROL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "ffcontrol._kernels._core",
                    ["src/ffcontrol/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
