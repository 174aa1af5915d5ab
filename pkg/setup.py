"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-Python fallback is selected
at import time), so any failure here downgrades to a warning instead of
aborting the install. Set KGHOP_SKIP_EXT=1 to skip the build outright.
"""

import os
import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    if os.environ.get("KGHOP_SKIP_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("Cython not available; building kghop without the fast kernels")
        return []
    from setuptools import Extension

    ext = Extension(
        "kghop.kernels._fast",
        ["src/kghop/kernels/_fast.pyx"],
    )
    return cythonize([ext], language_level="3")


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"kghop extension build failed ({exc}); using pure-Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"kghop extension build failed ({exc}); using pure-Python kernels")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
