import os

from setuptools import setup

# The matching kernel compiles to a C extension when Cython is available.
# The package works without it (pure-Python fallback); set MGDVD_NO_EXT=1
# to skip the build explicitly.
ext_modules = []
if os.environ.get("MGDVD_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/mgdvd/kernels/_cmatch.pyx"],
            language_level="3",
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
