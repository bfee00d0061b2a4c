"""Exact-arithmetic verification of q-series identities.

Public surface: the ``catalog`` of identity records, the evaluation and
verification ``engine``, the ``dsl`` parser, and the ``qslater`` command in
``cli``.  All coefficient arithmetic is exact rational.
"""

__version__ = "0.1.0"
