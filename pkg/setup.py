import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext = Extension(
    "msvar._kernels._core",
    ["src/msvar/_kernels/_core.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

# The compiled core is optional: msvar falls back to the pure-NumPy kernels
# at import time if the extension is absent.
setup(ext_modules=cythonize([ext], language_level=3) if cythonize else [])
