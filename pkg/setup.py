"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so a failed extension build degrades gracefully
instead of blocking installation.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mvenhance.backend._kernels",
                ["src/mvenhance/backend/_kernels.pyx"],
                extra_compile_args=["-O3", "-march=native", "-ffast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"warning: compiled kernels disabled ({exc}); using NumPy fallback")

setup(ext_modules=ext_modules)
