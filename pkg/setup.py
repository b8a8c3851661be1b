import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.environ.get("REGRET_ADJUST_NO_EXT", "") != "1":
    extensions = cythonize(
        [
            Extension(
                "regret_adjust._ext._vertex",
                ["src/regret_adjust/_ext/_vertex.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
