"""Build script: compiles the optional accelerated kernels.

The extension is a convenience, not a requirement.  If the build fails
(no compiler, no Cython), the package installs anyway and falls back to
the pure-numpy kernels at import time.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compilation failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            print(f"warning: skipping compiled kernels ({exc}); "
                  "pure-Python backend will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - depends on toolchain
            print(f"warning: building {ext.name} failed ({exc}); "
                  "pure-Python backend will be used")


ext_modules = []
if os.environ.get("PROMPTFUSE_SKIP_ACCEL") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("promptfuse._accel", ["src/promptfuse/_accel.pyx"])],
            language_level=3,
        )
    except ImportError:  # pragma: no cover - Cython not installed
        ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
