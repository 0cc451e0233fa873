"""Build script.  The Cython kernel extension is optional: if the build
fails (no compiler, no Cython) the package installs anyway and falls back
to the pure numpy kernels at import time."""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as err:  # compiler missing, etc.
            print(f"warning: building C kernels failed ({err}); "
                  "falling back to pure python kernels", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as err:
            print(f"warning: {ext.name} failed to build ({err}); "
                  "falling back to pure python kernels", file=sys.stderr)


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    return cythonize(
        [Extension(
            "normcount._kernels",
            ["src/normcount/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )],
        language_level=3,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
