"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a pure-NumPy
backend is selected at import time); the Cython build is attempted and
skipped on failure so installs never break on a machine without a C
compiler.

No -ffast-math / -march=native: the compiled kernels must be bit-identical
to the NumPy reference backend.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "medspecialty.backend._kernels",
                ["src/medspecialty/backend/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
