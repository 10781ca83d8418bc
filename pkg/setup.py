"""Build script: compiles the optional Cython kernel extension.

The extension accelerates the RK4 forward/reverse/adjoint sweeps. If the
compiler or Cython is unavailable the build falls back to a pure-Python
install; `optctrl.engine` selects the implementation at import time.
Set OPTCTRL_DISABLE_EXTENSION=1 to skip the compile step entirely.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compile failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            print(f"warning: building optctrl._kernels_cy failed ({exc}); "
                  "using the pure-Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: building {ext.name} failed ({exc}); "
                  "using the pure-Python kernels")


def extensions():
    if os.environ.get("OPTCTRL_DISABLE_EXTENSION"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython not available; using the pure-Python kernels")
        return []
    from setuptools import Extension

    ext = Extension(
        "optctrl._kernels_cy",
        ["src/optctrl/_kernels_cy.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
