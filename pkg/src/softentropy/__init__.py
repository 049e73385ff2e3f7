"""Software-entropy estimation from mutation analysis.

The top-level package stays import-light on purpose: the toy-language test
runner (``python -m softentropy.toylang``) is spawned once per kill-matrix
cell and must not pay for numpy or numba.
"""

__version__ = "0.1.0"
