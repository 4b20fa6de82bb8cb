"""Binary checkpoints of a single path.

Layout (all little-endian)::

    b"NLSE"  u32 version  u32 d  u32 n[d]  f8 L  f8 t  u8 scheme  f8 lambda  f8 sigma  i1 alpha
    f8 payload[2 * n**d]      real and imaginary parts interleaved, row-major
    u32 word count  u64 words[count]   Philox stream state (count 0 when absent)
"""

import struct

import numpy as np

from .dynamics import SCHEMES, State
from .errors import CheckpointError
from .grid import Field, make_grid
from .noise import rng_from_words, rng_state_words

MAGIC = b"NLSE"
VERSION = 1


def save_checkpoint(state, path, params):
    """Write ``state`` with the model parameters of ``params`` to ``path``."""
    g = state.field.grid
    v = np.ascontiguousarray(state.field.to_physical().values, dtype="<c16")
    words = rng_state_words(state.rng) if state.rng is not None else np.zeros(0, np.uint64)
    head = MAGIC + struct.pack("<II", VERSION, g.d) + struct.pack(f"<{g.d}I", *([g.n] * g.d))
    head += struct.pack("<ddBddb", g.L, state.t, SCHEMES.index(params.scheme), params.lam,
                        params.sigma, params.alpha)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(v.view("<f8").tobytes())
        fh.write(struct.pack("<I", len(words)))
        fh.write(np.asarray(words, dtype="<u8").tobytes())


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos} (needs {n} more)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Read a checkpoint; the header values are returned in ``State.meta``."""
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    if rd.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version, d = rd.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    if d not in (1, 2, 3):
        raise CheckpointError(f"{path}: invalid dimension {d} in header")
    ns = rd.unpack(f"<{d}I")
    if len(set(ns)) != 1:
        raise CheckpointError(f"{path}: anisotropic grids are not supported")
    L, t, scheme, lam, sigma, alpha = rd.unpack("<ddBddb")
    if scheme >= len(SCHEMES):
        raise CheckpointError(f"{path}: unknown scheme code {scheme}")
    grid = make_grid(d, ns[0], L)
    count = grid.npoints
    vals = np.frombuffer(rd.take(16 * count), dtype="<f8").view("<c16").reshape(grid.shape)
    (nw,) = rd.unpack("<I")
    words = np.frombuffer(rd.take(8 * nw), dtype="<u8")
    if rd.pos != len(rd.data):
        raise CheckpointError(f"{path}: {len(rd.data) - rd.pos} trailing bytes")
    rng = rng_from_words(words.astype(np.uint64)) if nw else None
    meta = {"d": d, "n": ns[0], "L": L, "t": t, "scheme": SCHEMES[scheme], "lambda": lam,
            "sigma": sigma, "alpha": alpha, "version": version}
    return State(Field(grid, vals.astype(complex)), t, rng, meta)
