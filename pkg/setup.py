"""Build script for the optional compiled kernel extension.

The package works without the extension: coolguard._kernels falls back to
the pure-NumPy reference implementation when the compiled module is absent
(or when COOLGUARD_PURE=1 is set).
"""

import os
import sys

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("COOLGUARD_SKIP_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext = Extension(
            "coolguard._kernels._fast",
            ["src/coolguard/_kernels/_fast.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
    except Exception as exc:  # pragma: no cover - build-env dependent
        sys.stderr.write(f"coolguard: skipping compiled kernels ({exc})\n")
        ext_modules = []

setup(ext_modules=ext_modules)
