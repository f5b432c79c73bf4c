import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: glvlab falls back to the numpy
# implementation when the extension is missing (see glvlab/kernels.py).
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "glvlab._kernels",
                ["src/glvlab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
