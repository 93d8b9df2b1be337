"""Slow, independent reference implementations used only as test oracles."""

from __future__ import annotations

import itertools

# --- Keccak-f[1600] / SHAKE-256, straight from the FIPS 202 description -----

_RC = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]  # fmt: skip
_ROT = [[0, 36, 3, 41, 18], [1, 44, 10, 45, 2], [62, 6, 43, 15, 61], [28, 55, 25, 21, 56], [27, 20, 39, 8, 14]]
_MASK = (1 << 64) - 1


def _rotl(v, n):
    return ((v << n) | (v >> (64 - n))) & _MASK if n else v


def _keccak_f(a):
    for rc in _RC:
        c = [a[x][0] ^ a[x][1] ^ a[x][2] ^ a[x][3] ^ a[x][4] for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rotl(c[(x + 1) % 5], 1) for x in range(5)]
        a = [[a[x][y] ^ d[x] for y in range(5)] for x in range(5)]
        b = [[0] * 5 for _ in range(5)]
        for x in range(5):
            for y in range(5):
                b[y][(2 * x + 3 * y) % 5] = _rotl(a[x][y], _ROT[x][y])
        a = [[b[x][y] ^ (~b[(x + 1) % 5][y] & b[(x + 2) % 5][y]) for y in range(5)] for x in range(5)]
        a[0][0] ^= rc
    return a


def shake256(data: bytes, out_len: int) -> bytes:
    rate = 136
    msg = bytearray(data) + b"\x1f"
    msg += b"\x00" * (-len(msg) % rate)
    msg[-1] |= 0x80
    state = [[0] * 5 for _ in range(5)]
    for off in range(0, len(msg), rate):
        block = msg[off : off + rate]
        for i in range(rate // 8):
            state[i % 5][i // 5] ^= int.from_bytes(block[8 * i : 8 * i + 8], "little")
        state = _keccak_f(state)
    out = b""
    while len(out) < out_len:
        out += b"".join(state[i % 5][i // 5].to_bytes(8, "little") for i in range(rate // 8))
        state = _keccak_f(state)
    return out[:out_len]


# --- combinatorics -----------------------------------------------------------


def ball_by_enumeration(n: int, radius: int) -> int:
    """Count n-bit strings of weight <= radius by walking all 2**n of them."""
    return sum(1 for v in range(1 << n) if bin(v).count("1") <= radius)


def egcd_inverse(a: int, m: int) -> int:
    old_r, r, old_s, s = a % m, m, 1, 0
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
    assert old_r == 1
    return old_s % m


def naive_weighted_mean(arrays, weights):
    """Elementwise weighted mean with Python floats, one element at a time."""
    import numpy as np

    total = float(sum(weights))
    out = np.empty_like(arrays[0], dtype=float)
    for idx in itertools.product(*(range(s) for s in arrays[0].shape)):
        out[idx] = sum(float(w) * float(a[idx]) for a, w in zip(arrays, weights)) / total
    return out


def central_difference(f, x, h=1e-6):
    import numpy as np

    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def ball_table_by_enumeration(n: int):
    """Cumulative weight counts for every radius, by popcounting all 2**n strings."""
    import numpy as np

    weights = np.bitwise_count(np.arange(1 << n, dtype=np.uint32))
    return [int(c) for c in np.cumsum(np.bincount(weights, minlength=n + 1))]
