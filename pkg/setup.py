import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "bevtrack._iou_core",
        ["src/bevtrack/_iou_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

# The compiled kernel is optional: bevtrack.geometry falls back to the pure
# Python implementation when the extension is absent.
setup(ext_modules=cythonize(extensions) if cythonize is not None else [])
