import os

from setuptools import setup

ext_modules = []
if os.environ.get("MINMOD_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "minmod._ckernels",
                    ["src/minmod/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no FMA contraction: the compiled kernel must round
                    # exactly like the numpy fallback, operation by operation
                    extra_compile_args=["-ffp-contract=off"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        # No Cython / numpy at build time: install pure-python; the package
        # falls back to the vectorized numpy kernels at import.
        ext_modules = []

setup(ext_modules=ext_modules)
