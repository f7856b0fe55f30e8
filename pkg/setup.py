from setuptools import Extension, setup

# The compiled kernels are optional: when Cython (or a C compiler) is
# unavailable the package falls back to the pure-NumPy implementation
# selected at import time in eventorder.backend.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "eventorder._kernels",
                ["src/eventorder/_kernels.pyx"],
                extra_compile_args=[
                    "-O3",
                    "-march=native",
                    "-ffast-math",
                    "-fno-math-errno",
                ],
                # -ffast-math vectorises exp/log through libmvec, which must
                # be linked explicitly on glibc.
                libraries=["mvec", "m"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
