"""Build script: compiles the simulation engine into a C extension when
Cython is available.

The engine lives in ``src/mcsim/_engine.py`` and is plain Python.  At build
time it is copied to ``_engine_cy.py`` and cythonized into
``mcsim._engine_cy``; at import time ``mcsim.engine`` picks the compiled
module if present and falls back to the interpreted one otherwise.  Both
backends share a single source file, so behavior is identical by
construction.
"""

import os
import shutil

from setuptools import setup

HERE = os.path.dirname(os.path.abspath(__file__))
SRC = os.path.join("src", "mcsim", "_engine.py")
CY_COPY = os.path.join("src", "mcsim", "_engine_cy.py")


def build_extensions():
    if os.environ.get("MCSIM_SKIP_CYTHON") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    os.chdir(HERE)
    shutil.copyfile(SRC, CY_COPY)
    return cythonize(
        [CY_COPY],
        language_level="3",
        compiler_directives={"binding": True},
        quiet=True,
    )


setup(ext_modules=build_extensions())
