"""Build script for the optional compiled kernels.

The package is pure Python plus one optional Cython extension
(``fedpake._ckernels``) that accelerates the hot aggregation loops.
If Cython or a C compiler is unavailable, the build silently skips the
extension and the package falls back to the numpy kernels at import time.
Set FEDPAKE_NO_EXTENSION=1 to skip the extension build explicitly.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that downgrades compilation failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(
            f"WARNING: building fedpake._ckernels failed ({exc}); "
            "falling back to the pure numpy kernels.",
            file=sys.stderr,
        )


def extensions():
    if os.environ.get("FEDPAKE_NO_EXTENSION"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "fedpake._ckernels",
        ["src/fedpake/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
