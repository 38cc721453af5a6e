"""File formats for trajectories, reference measures and edge lists.

Binary layout (all little-endian)::

    magic    4 bytes   b"CMF1" (trajectory) or b"CMFR" (reference measure)
    version  u32
    n, d, T  u32 each
    Z        float64[(T+1) * n * d], time-major, row-major
    A        CMF1 only: T+1 layers, each np.packbits of the n*n row-major bits

Each packed layer is padded to a whole number of bytes.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .meanfield import ReferenceMeasure

__all__ = [
    "FORMAT_VERSION",
    "write_trajectory",
    "read_trajectory",
    "write_reference",
    "read_reference",
    "write_edge_list",
    "read_edge_list",
    "write_latent_csv",
]

FORMAT_VERSION = 1
_TRAJ_MAGIC = b"CMF1"
_REF_MAGIC = b"CMFR"
_HEADER = struct.Struct("<4sIIII")


def _write(path, magic: bytes, Z: np.ndarray, A: np.ndarray | None) -> None:
    Z = np.ascontiguousarray(Z, dtype="<f8")
    if Z.ndim != 3:
        raise ValueError("latent array must be (T+1, n, d)")
    T1, n, d = Z.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, FORMAT_VERSION, n, d, T1 - 1))
        fh.write(Z.tobytes())
        if A is not None:
            A = np.asarray(A, dtype=bool)
            if A.shape != (T1, n, n):
                raise ValueError(f"network shape {A.shape} does not match latent {Z.shape}")
            for layer in A:
                fh.write(np.packbits(layer.ravel()).tobytes())


def _read(path, magic: bytes, with_network: bool):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    got, version, n, d, T = _HEADER.unpack_from(data)
    if got != magic:
        raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    off = _HEADER.size
    count = (T + 1) * n * d
    z_end = off + 8 * count
    layer_bytes = (n * n + 7) // 8
    expected = z_end + (T + 1) * layer_bytes if with_network else z_end
    if len(data) != expected:
        raise ValueError(f"{path}: size {len(data)} != expected {expected}")
    Z = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(T + 1, n, d).astype(float)
    if not with_network:
        return Z, None
    A = np.empty((T + 1, n, n), dtype=bool)
    for t in range(T + 1):
        raw = np.frombuffer(data, dtype=np.uint8, count=layer_bytes, offset=z_end + t * layer_bytes)
        A[t] = np.unpackbits(raw, count=n * n).reshape(n, n).astype(bool)
    return Z, A


def write_trajectory(path, Z: np.ndarray, A: np.ndarray) -> None:
    _write(path, _TRAJ_MAGIC, Z, A)


def read_trajectory(path) -> tuple[np.ndarray, np.ndarray]:
    return _read(path, _TRAJ_MAGIC, True)


def write_reference(path, ref: ReferenceMeasure) -> None:
    _write(path, _REF_MAGIC, np.transpose(ref.samples, (1, 0, 2)), None)


def read_reference(path) -> ReferenceMeasure:
    Z, _ = _read(path, _REF_MAGIC, False)
    return ReferenceMeasure.from_latent(Z)


def write_edge_list(path, A: np.ndarray) -> None:
    """One ``t i j`` line per edge with ``i < j``; self-loops are not written."""
    A = np.asarray(A, dtype=bool)
    if A.ndim == 2:
        A = A[None]
    T1, n, _ = A.shape
    with open(path, "w") as fh:
        fh.write(f"# t i j (0-indexed, i<j) n={n} layers={T1}\n")
        for t in range(T1):
            iu, ju = np.nonzero(np.triu(A[t], k=1))
            fh.writelines(f"{t} {i} {j}\n" for i, j in zip(iu.tolist(), ju.tolist()))


def read_edge_list(path, n: int | None = None, layers: int | None = None) -> np.ndarray:
    """Inverse of ``write_edge_list``: a ``(layers, n, n)`` stack with unit diagonal."""
    triples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("n=") and n is None:
                        n = int(tok[2:])
                    elif tok.startswith("layers=") and layers is None:
                        layers = int(tok[7:])
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 't i j'")
            t, i, j = (int(p) for p in parts)
            if i == j:
                raise ValueError(f"{path}:{lineno}: self-loop")
            triples.append((t, i, j))
    arr = np.array(triples, dtype=np.int64).reshape(-1, 3)
    if n is None:
        n = int(arr[:, 1:].max()) + 1 if len(arr) else 1
    if layers is None:
        layers = int(arr[:, 0].max()) + 1 if len(arr) else 1
    if len(arr) and (arr.min() < 0 or arr[:, 1:].max() >= n or arr[:, 0].max() >= layers):
        raise ValueError(f"{path}: edge index out of range")
    A = np.zeros((layers, n, n), dtype=bool)
    A[arr[:, 0], arr[:, 1], arr[:, 2]] = True
    A[arr[:, 0], arr[:, 2], arr[:, 1]] = True
    idx = np.arange(n)
    A[:, idx, idx] = True
    return A


def write_latent_csv(path, Z: np.ndarray) -> None:
    """One row per ``(t, i)`` with ``d`` coordinate columns."""
    Z = np.asarray(Z, dtype=float)
    T1, n, d = Z.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i"] + [f"z{c}" for c in range(d)])
        for t in range(T1):
            for i in range(n):
                w.writerow([t, i] + [repr(float(v)) for v in Z[t, i]])
