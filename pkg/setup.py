"""Build the optional Cython assignment kernel.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-Python solver at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("NGRAM_OAXE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "ngram_oaxe._lap_ext",
                    ["src/ngram_oaxe/_lap_ext.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
