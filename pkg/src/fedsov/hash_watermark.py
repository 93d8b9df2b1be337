"""Hash watermarks derived from concatenated client public keys.

The watermark is the first ``n`` bits of ``SHAKE-256("FEDSOV-WM-v1" || pk_1 || ... || pk_K)``.
Bit ``i`` is bit ``i % 8`` (little-endian) of digest byte ``i // 8``.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

WM_TAG = b"FEDSOV-WM-v1"
MIN_BITS = 8
MAX_BITS = 1 << 20


@dataclass(frozen=True, eq=False)
class Watermark:
    """Fixed-length bit vector stored as a read-only uint8 array of 0/1."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8).ravel().copy()
        if bits.size and bits.max() > 1:
            raise ValueError("watermark bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, Watermark) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.to_bytes())

    def signs(self) -> np.ndarray:
        """Bit 1 -> +1, bit 0 -> -1."""
        return self.bits.astype(np.float64) * 2.0 - 1.0

    @classmethod
    def from_signs(cls, signs) -> "Watermark":
        return cls((np.asarray(signs) > 0).astype(np.uint8))

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, n: int) -> "Watermark":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
        if bits.size < n:
            raise ValueError(f"{len(data)} bytes cannot hold {n} bits")
        return cls(bits[:n])

    def flip(self, indices) -> "Watermark":
        bits = self.bits.copy()
        bits[np.asarray(indices, dtype=np.int64)] ^= 1
        return Watermark(bits)

    def to_json(self) -> dict:
        return {"n": self.n, "bits_hex": self.to_bytes().hex()}

    @classmethod
    def from_json(cls, doc: dict) -> "Watermark":
        return cls.from_bytes(bytes.fromhex(doc["bits_hex"]), int(doc["n"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "Watermark":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ConcatenatedKey:
    """Ordered public-key encodings; ``bytes`` is their in-order concatenation."""

    client_pks: tuple[bytes, ...]

    def __post_init__(self):
        pks = tuple(bytes(pk) for pk in self.client_pks)
        if not pks:
            raise ValueError("need at least one public key")
        if len({len(pk) for pk in pks}) != 1:
            raise ValueError("public key encodings must share one length")
        object.__setattr__(self, "client_pks", pks)

    @property
    def K(self) -> int:
        return len(self.client_pks)

    @property
    def pk_len(self) -> int:
        return len(self.client_pks[0])

    @property
    def bytes(self) -> bytes:
        return b"".join(self.client_pks)

    def __getitem__(self, i: int) -> bytes:
        return self.client_pks[i]

    @classmethod
    def from_bytes(cls, data: bytes, pk_len: int) -> "ConcatenatedKey":
        if pk_len <= 0 or len(data) % pk_len:
            raise ValueError(f"{len(data)} bytes is not a multiple of pk length {pk_len}")
        return cls(tuple(data[i : i + pk_len] for i in range(0, len(data), pk_len)))

    def save(self, path: str | Path) -> None:
        """Write ``path`` (raw concatenation) plus ``path.json`` sidecar."""
        path = Path(path)
        path.write_bytes(self.bytes)
        path.with_suffix(".json").write_text(json.dumps({"count": self.K, "pk_len_bytes": self.pk_len}))

    @classmethod
    def load(cls, path: str | Path) -> "ConcatenatedKey":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        con = cls.from_bytes(path.read_bytes(), int(meta["pk_len_bytes"]))
        if con.K != int(meta["count"]):
            raise ValueError(f"sidecar says {meta['count']} keys, file holds {con.K}")
        return con


def generate_watermark(pk_con: ConcatenatedKey | bytes, n: int) -> Watermark:
    if not MIN_BITS <= n <= MAX_BITS:
        raise ValueError(f"watermark length must be in [{MIN_BITS}, {MAX_BITS}], got {n}")
    data = pk_con.bytes if isinstance(pk_con, ConcatenatedKey) else bytes(pk_con)
    digest = hashlib.shake_256(WM_TAG + data).digest((n + 7) // 8)
    return Watermark.from_bytes(digest, n)


def _check_lengths(a: Watermark, b: Watermark) -> None:
    if a.n != b.n:
        raise ValueError(f"watermark lengths differ: {a.n} vs {b.n}")


def hamming_distance(a: Watermark, b: Watermark) -> int:
    _check_lengths(a, b)
    return int(np.count_nonzero(a.bits != b.bits))


def detection_errors(h: Watermark, h_prime: Watermark) -> int:
    return hamming_distance(h, h_prime)


def detection_rate(h: Watermark, h_prime: Watermark) -> float:
    return 1.0 - detection_errors(h, h_prime) / h.n


def is_near_collision(a: Watermark, b: Watermark, n_prime: int) -> bool:
    if not 0 <= n_prime <= a.n:
        raise ValueError(f"n_prime must lie in [0, {a.n}]")
    return hamming_distance(a, b) <= n_prime


def near_collision_frequency(
    n: int, n_prime: int, trials: int, rng: np.random.Generator, chunk: int = 1 << 16
) -> float:
    """Fraction of uniform ``n``-bit strings within distance ``n_prime`` of a random target."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    target = rng.integers(0, 2, size=n, dtype=np.uint8)
    hits = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        draws = rng.integers(0, 2, size=(m, n), dtype=np.uint8)
        dist = np.count_nonzero(draws != target, axis=1)
        hits += int(np.count_nonzero(dist <= n_prime))
        done += m
    return hits / trials


def write_diff_csv(h: Watermark, h_prime: Watermark, path: str | Path) -> None:
    _check_lengths(h, h_prime)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "expected", "extracted", "match"])
        for i, (a, b) in enumerate(zip(h.bits.tolist(), h_prime.bits.tolist())):
            w.writerow([i, a, b, int(a == b)])


def concat_keys(pk_encodings: Sequence[bytes]) -> ConcatenatedKey:
    return ConcatenatedKey(tuple(pk_encodings))
