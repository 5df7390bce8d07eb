import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# optional=True: a missing compiler degrades to the pure-NumPy backend.
extensions = [
    Extension(
        "gerbershiu._backends._core",
        ["src/gerbershiu/_backends/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"})
    if cythonize is not None
    else [],
)
