import os

from setuptools import setup

ext_modules = []
if not os.environ.get("YIELDNAV_NO_EXT"):
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
                    "yieldnav._ckernels",
                    ["src/yieldnav/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    language="c++",
                    # no FMA contraction: results must match the Python fallback bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
