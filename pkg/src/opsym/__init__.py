"""Numerical toolkit for symmetrised tensor products of operator spaces.

Modules: ``matcore`` (linear algebra), ``opspace`` (concrete operator spaces),
``cpmaps`` (completely positive and bounded maps), ``trilinear`` (trilinear
forms and their factorisation), ``symnorm`` (symmetrisation and Haagerup
norms), ``cones`` (positive cones and certificates), ``fnspace`` (kernels on
finite sets), ``tro`` (ternary rings of operators and balanced products),
``dualops`` (duals and the pairing) and ``cli``.
"""

__version__ = "0.1.0"
