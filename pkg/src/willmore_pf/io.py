"""Flat binary field snapshots with a fixed 64-byte ASCII header."""

import numpy as np

MAGIC = "WPF1"
HEADER_BYTES = 64


def write_field(path, values, extent, epsilon, time, extra=""):
    """Header: magic, n, L, eps, t (space-separated ASCII, padded to 64)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    header = f"{MAGIC} n={n} L={extent:g} eps={epsilon:g} t={time:g} {extra}"
    blob = header.encode()
    if len(blob) > HEADER_BYTES:
        raise ValueError("snapshot header too long")
    blob = blob.ljust(HEADER_BYTES)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(values.tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        header = fh.read(HEADER_BYTES).decode().strip()
        payload = fh.read()
    parts = header.split()
    if parts[0] != MAGIC:
        raise ValueError(f"bad snapshot magic {parts[0]!r}")
    meta = dict(p.split("=", 1) for p in parts[1:] if "=" in p)
    n = int(meta["n"])
    values = np.frombuffer(payload, dtype=np.float64)
    if values.size == n * n:
        values = values.reshape(n, n)
    meta = {
        "n": n,
        "L": float(meta["L"]),
        "eps": float(meta["eps"]),
        "t": float(meta["t"]),
    }
    return values, meta
