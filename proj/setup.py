import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "jdiff._jdiff",
    sources=sorted(glob.glob("src/*.cpp")) + ["python/bindings.cpp"],
    include_dirs=["include", "vendor", "/usr/include/eigen3"],
    libraries=["crypto"],
    cxx_std=20,
    # Match the CMake build: keep results independent of FMA contraction.
    extra_compile_args=["-O2", "-ffp-contract=off"],
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
