"""Builds the optional compiled SSA kernel; the package works without it."""
import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("weightflow.ssa._ssa_kernel", ["src/weightflow/ssa/_ssa_kernel.pyx"],
                   include_dirs=[numpy.get_include()], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
