import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -O3 only: the kernels rely on IEEE inf/NaN semantics, so no -ffast-math.
extensions = [
    Extension(
        "hops._kernels._native",
        ["src/hops/_kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
