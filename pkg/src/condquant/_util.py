"""Shared plumbing: seed derivation, float formatting, atomic file writes."""

from __future__ import annotations

import os

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # splitmix64 finalizer
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a stable 64-bit sub-seed from a master seed and integer keys.

    The scheme is splittable: extending the key tuple never changes seeds
    already derived under shorter tuples with different keys, so seed
    families can grow (more bootstrap grids, more replications) without
    reshuffling earlier ones.
    """
    h = _mix64((int(seed) & _MASK64) + _GOLDEN)
    for k in keys:
        h = _mix64(h ^ _mix64((int(k) & _MASK64) + _GOLDEN))
    return h


def fmt_float(v: float) -> str:
    """Shortest decimal representation that round-trips to the same float."""
    return repr(float(v))


def atomic_write_text(path: str, text: str) -> None:
    """Write a file via temp-then-rename so no partial file survives a failure."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def worker_count() -> int:
    """Parallelism cap: QQ_THREADS when set, else the hardware default."""
    raw = os.environ.get("QQ_THREADS")
    if raw is not None:
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return os.cpu_count() or 1
