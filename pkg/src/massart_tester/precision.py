"""Extended-precision scalar layer on top of gmpy2/MPFR.

All certified quantities in this package are computed with gmpy2.mpfr
values under round-to-nearest.  The working precision is a package-level
setting (default 512 bits, minimum 128); individual computations that
need more headroom escalate locally with `workprec`.
"""
from __future__ import annotations

import contextlib

import gmpy2
from gmpy2 import mpfr, mpz, mpq  # re-exported for the rest of the package

__all__ = [
    "DEFAULT_BITS", "MIN_BITS", "get_bits", "set_bits", "workprec",
    "mpf", "mpfr", "mpz", "mpq", "to_float",
]

DEFAULT_BITS = 512
MIN_BITS = 128

_current_bits = DEFAULT_BITS
gmpy2.get_context().precision = _current_bits


def get_bits() -> int:
    """Current default working precision in bits."""
    return _current_bits


def set_bits(bits: int) -> None:
    """Set the package-wide default precision (>= 128 bits)."""
    global _current_bits
    if bits < MIN_BITS:
        raise ValueError(f"precision must be >= {MIN_BITS} bits, got {bits}")
    _current_bits = int(bits)
    gmpy2.get_context().precision = _current_bits


@contextlib.contextmanager
def workprec(bits: int):
    """Temporarily run at `bits` precision (round-to-nearest)."""
    if bits < MIN_BITS:
        raise ValueError(f"precision must be >= {MIN_BITS} bits, got {bits}")
    ctx = gmpy2.get_context()
    saved = ctx.precision
    ctx.precision = int(bits)
    try:
        yield
    finally:
        ctx.precision = saved


def mpf(x) -> mpfr:
    """Construct an mpfr at the current working precision."""
    return mpfr(x)


def to_float(x) -> float:
    return float(x)
