"""Build script: compiles the optional accelerator extension when a toolchain
is available, and falls back to the pure-Python kernels otherwise."""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension best-effort; the package works without it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing: keep the install going
            print(f"warning: skipping accelerator extension build ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: skipping {ext.name} ({exc})")


def extensions():
    if os.environ.get("QMETRO_SKIP_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "qmetro._fastpath._chain",
        ["src/qmetro/_fastpath/_chain.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
