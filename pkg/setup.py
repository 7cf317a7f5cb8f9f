"""Build hook for the optional compiled tape kernels.

The package is fully functional without the extension; absgrad.backend
falls back to the pure-Python kernels when the import fails.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Best-effort build: a failing C toolchain must not block installation."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: skipping compiled kernels ({exc}); "
                  "pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"warning: could not build {ext.name} ({exc}); "
                  "pure-Python fallback will be used")


ext_modules = []
if not os.environ.get("ABSGRAD_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "absgrad._kernels_c",
                    ["src/absgrad/_kernels_c.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level="3",
        )
    except ImportError:  # pragma: no cover - Cython/numpy absent at build time
        pass

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
