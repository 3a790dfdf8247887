"""Build the optional compiled kernels.

The package works without them: ``toolgate.kernels`` falls back to the
numpy/pure-Python implementations when ``toolgate._ckernels`` is missing.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TOOLGATE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "toolgate._ckernels",
                    ["src/toolgate/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no contraction into FMA: results must match the numpy path bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
