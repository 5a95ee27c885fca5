# python setup.py build_ext --inplace
import os
import platform

import numpy as np
from setuptools import Extension, setup

ext_modules = []
cflags = ["-O3"]
# hardware popcount; BINHDC_PORTABLE=1 keeps the generic builtin for pre-2008 x86 CPUs
if platform.machine().lower() in ("x86_64", "amd64") and os.environ.get("BINHDC_PORTABLE") != "1":
    cflags.append("-mpopcnt")
if os.environ.get("BINHDC_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "binhdc._ckernels",
                    ["src/binhdc/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=cflags,
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "initializedcheck": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
