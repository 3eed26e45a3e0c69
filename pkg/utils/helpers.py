"""Utility functions used throughout the application"""
import hashlib
import logging
import numpy as np

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level="INFO"):
    """Install a single stream handler on the root logger"""
    root = logging.getLogger()
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    root.setLevel(level)
    if not any(getattr(h, "_fingerprint", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._fingerprint = True
        root.addHandler(handler)


def derive_seed(base_seed, *indices):
    """Mix a base seed with tuple indices into an independent 63-bit seed"""
    signature = ":".join(str(int(v)) for v in (base_seed, *indices))
    digest = hashlib.sha256(signature.encode()).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)


def equal_tailed_interval(samples, level):
    """Equal-tailed credible interval from sample quantiles (linear interpolation)"""
    if not 0.0 < level < 1.0:
        raise ValueError(f"credible level must lie in (0, 1), got {level}")
    tail = round((1.0 - level) / 2.0, 12)
    low, high = np.quantile(np.asarray(samples, dtype=float), [tail, 1.0 - tail], method="linear")
    return float(low), float(high)


def format_float(value):
    """17 significant digits, enough for a bit-exact round trip"""
    return format(float(value), ".17g")


def first_nonzero_positive(vectors, tol):
    """Flip the sign of each column so its first entry with |v| > tol is positive"""
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.size == 0:
        return vectors
    significant = np.abs(vectors) > tol
    first = np.argmax(significant, axis=0)
    leading = vectors[first, np.arange(vectors.shape[1])]
    signs = np.where(leading < 0, -1.0, 1.0)
    return vectors * signs[np.newaxis, :]
