import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "ultrafit._kernels",
        ["src/ultrafit/_kernels.pyx"],
        include_dirs=[np.get_include(), "src/ultrafit"],
        depends=["src/ultrafit/_fingerprint.h"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no FMA contraction: distances must match the numpy backend bit for bit
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
