import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    native = Extension(
        "loomflow._kernels._native",
        ["src/loomflow/_kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    # Pure-python kernels are a full fallback; never fail the install over the extension.
    native.optional = True
    ext_modules = cythonize([native], language_level=3)

setup(ext_modules=ext_modules)
