"""Build script: compiles the accelerator extension when a toolchain is present.

The package is fully functional without the extension; the solver falls back
to a NumPy implementation of the same kernels at import time.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError

_BUILD_ERRORS = (CCompilerError, ExecError, PlatformError, FileNotFoundError)


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except _BUILD_ERRORS as exc:
            warnings.warn(f"skipping compiled kernels ({exc}); using NumPy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except _BUILD_ERRORS as exc:
            warnings.warn(f"skipping {ext.name} ({exc}); using NumPy fallback")


def extensions():
    try:
        import numpy
        import scipy  # noqa: F401 -- the kernels link against its BLAS
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "rbirg._kernels",
        ["src/rbirg/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-march=native"],
    )
    return cythonize(ext, compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
