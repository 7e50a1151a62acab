"""Build script for the optional compiled kernel backend.

The package is fully functional without the extension (a pure numpy twin
ships alongside it), so any build failure degrades to a warning rather
than aborting the install.
"""
import os
import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError

# no -ffast-math, and contraction off: the pure and compiled backends
# promise bit-identical IEEE arithmetic, and fused multiply-adds would
# silently break that promise
COMPILE_ARGS = ["-O3", "-ffp-contract=off"]


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except (PlatformError, FileNotFoundError) as exc:
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except (CCompilerError, ExecError, PlatformError,
                FileNotFoundError) as exc:
            self._skip(exc)

    def _skip(self, exc):
        warnings.warn(
            f"compiled kernels unavailable ({exc}); "
            f"falling back to the pure numpy backend")


def extensions():
    pyx = os.path.join("src", "redi", "_ckernels.pyx")
    if not os.path.exists(pyx):
        return []
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        warnings.warn("Cython not available; building without compiled kernels")
        return []
    return cythonize(
        [Extension("redi._ckernels", [pyx],
                   extra_compile_args=COMPILE_ARGS)],
        language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
