"""Build script for the optional compiled projection kernels.

The package is fully functional without the extension (a NumPy
fallback is selected at import time), so a failing C toolchain only
costs speed, not correctness.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, otherwise warn and continue."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            "warning: compiled kernels unavailable (%s); "
            "falling back to the pure NumPy backend" % exc,
            file=sys.stderr,
        )


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:  # pragma: no cover - build env dependent
        print("warning: %s; skipping compiled kernels" % exc, file=sys.stderr)
        return []
    return cythonize(
        [
            Extension(
                "bilevelkit._kernels_cy",
                ["src/bilevelkit/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})
