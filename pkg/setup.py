"""Builds the optional compiled engine; the package works without it."""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler or no Cython: fall back to pure Python
            print(f"warning: compiled engine not built ({exc}); using the pure-Python engine")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using the pure-Python engine")


def extensions():
    if os.environ.get("DFPSIM_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    try:
        return cythonize(
            ["src/dfpsim/simcore/_engine_cy.pyx"],
            compiler_directives={"language_level": "3"},
            quiet=True,
        )
    except Exception as exc:
        print(f"warning: cythonize failed ({exc}); using the pure-Python engine")
        return []


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
