"""Build script: compiles the CSR kernel extension when Cython and a C
compiler are available.  The package works without it (pure numpy fallback
selected at import time), so any build failure here downgrades gracefully.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "afemeig._kernels",
                ["src/afemeig/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("Cython not available; installing with the pure-python kernel backend")

setup(ext_modules=ext_modules)
