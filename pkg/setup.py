from setuptools import setup, Extension

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "promptrec.kernels._skipgram",
                ["src/promptrec/kernels/_skipgram.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

# The compiled kernel is an accelerator only; the package imports fine
# without it (promptrec.kernels falls back to the numpy implementation).
setup(ext_modules=ext_modules)
