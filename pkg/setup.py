import os

from setuptools import setup

ext_modules = []
if os.environ.get("DOMCFTP_NO_EXT") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/domcftp/_speedups.pyx"],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )

setup(ext_modules=ext_modules)
