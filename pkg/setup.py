import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are an optional accelerator: querytrack.kernels falls
# back to the pure-numpy implementation when the extension is missing.
setup(
    ext_modules=cythonize(
        [
            Extension(
                "querytrack._ckernels",
                sources=["src/querytrack/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ],
        compiler_directives={"language_level": 3},
    )
)
