"""Build hook for the optional compiled Yee kernel.

If Cython or a compiler is missing the package still installs and uses
the numpy kernels.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("tdenclosure.solver._yee", ["src/tdenclosure/solver/_yee.pyx"],
                   include_dirs=[numpy.get_include()],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
        quiet=True,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
