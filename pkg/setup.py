"""Build script: compiles the optional fused-kernel extension.

The package works without the extension (pure numpy fallback is selected at
import time), so a missing compiler or Cython only costs speed, not features.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "cones_lab._kernels._fused",
                ["src/cones_lab/_kernels/_fused.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - depends on build host
    sys.stderr.write(f"fused kernels not built ({exc}); numpy fallback will be used\n")

setup(ext_modules=ext_modules)
