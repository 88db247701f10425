import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the compiled kernel; the pure-Python one is used
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("COEXSIM_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "coexsim._slotloop",
                ["src/coexsim/_slotloop.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math / FMA: results must match the Python kernel bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
