# Builds the optional Cython kernels. Without Cython or a working compiler
# the package still installs and falls back to the numpy kernels.
#
#   pip install -e . --no-build-isolation
#   python setup.py build_ext --inplace
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "hyperhier._ckernels",
                ["src/hyperhier/_ckernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
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
