import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = None
else:
    ext_modules = cythonize(
        [
            Extension(
                "alignlab._ckernels",
                ["src/alignlab/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

# Without Cython the package installs pure-Python; alignlab.kernels falls
# back to the numpy implementation at import time.
setup(ext_modules=ext_modules)
