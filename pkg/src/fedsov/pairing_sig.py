"""Pairing groups and the short signature used for ownership challenges.

Two interchangeable backends share one interface:

``desk_toy``
    A deliberately insecure symmetric group: the order-1009 subgroup of
    ``Z_10091^*``. The pairing is computed by discrete-log lookup, which is
    only possible because the group is tiny. Useful for exhaustive tests.

``bls12_381``
    The BLS12-381 curve (asymmetric, ~128-bit security) via arkworks.
    Signatures live in G1, public keys and the message generator in G2.

Scheme (sk = (x, y), pk = (u, v) = (g2^x, g2^y))::

    sign:   s = g1^(1 / (x + m + y*r)),  r random in Z_p^*
    verify: e(s, u * g2^m * v^r) == e(g1, g2)
"""

from __future__ import annotations

import hashlib
import json
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

DESK_P = 1009
DESK_Q = 10 * DESK_P + 1  # prime; the order-p subgroup of Z_q^* is the desk group
BLS12_381_R = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001

H2S_TAG = b"FEDSOV-H2S-v1"

CURVES = ("desk_toy", "bls12_381")


class MalformedEncoding(ValueError):
    """Bytes that do not decode to a valid group element or scalar."""


class GroupParams:
    """Common interface of the two pairing backends.

    G1 and G2 elements are opaque; only the methods below touch them.
    """

    curve_id: str
    p: int
    g1: Any
    g2: Any
    g1_len: int
    g2_len: int

    @property
    def scalar_len(self) -> int:
        return (self.p.bit_length() + 7) // 8

    # group arithmetic -----------------------------------------------------
    def mul(self, point, k: int):
        raise NotImplementedError

    def add(self, a, b):
        raise NotImplementedError

    def pair(self, a1, b2):
        raise NotImplementedError

    def is_identity(self, point) -> bool:
        raise NotImplementedError

    @cached_property
    def gt(self):
        return self.pair(self.g1, self.g2)

    # encodings -------------------------------------------------------------
    def encode_g1(self, point) -> bytes:
        raise NotImplementedError

    def decode_g1(self, data: bytes):
        raise NotImplementedError

    def encode_g2(self, point) -> bytes:
        raise NotImplementedError

    def decode_g2(self, data: bytes):
        raise NotImplementedError

    def encode_scalar(self, k: int) -> bytes:
        return int(k).to_bytes(self.scalar_len, "big")

    def decode_scalar(self, data: bytes, nonzero: bool = False) -> int:
        if len(data) != self.scalar_len:
            raise MalformedEncoding(f"scalar must be {self.scalar_len} bytes, got {len(data)}")
        k = int.from_bytes(data, "big")
        if k >= self.p or (nonzero and k == 0):
            raise MalformedEncoding("scalar out of range")
        return k

    def describe(self) -> dict:
        return {"curve_id": self.curve_id, "p": hex(self.p)}


class DeskParams(GroupParams):
    """Order-``p`` subgroup of ``Z_q^*`` with a lookup-table pairing.

    Elements are plain ints mod ``q``. Both source groups and the target group
    are the same subgroup, generated by ``g``.
    """

    curve_id = "desk_toy"

    def __init__(self, seed: int | None = None):
        self.p = DESK_P
        self.q = DESK_Q
        rng = np.random.default_rng(seed)
        cofactor = (self.q - 1) // self.p
        while True:
            h = int(rng.integers(2, self.q - 1))
            g = pow(h, cofactor, self.q)
            if g != 1:
                break
        self.g = g
        self.g1 = g
        self.g2 = g
        self.g1_len = self.g2_len = (self.q.bit_length() + 7) // 8
        self.seed = seed

    def __eq__(self, other):
        return isinstance(other, DeskParams) and (self.q, self.p, self.g) == (other.q, other.p, other.g)

    def __hash__(self):
        return hash((self.curve_id, self.g))

    def __repr__(self):
        return f"DeskParams(p={self.p}, q={self.q}, g={self.g})"

    @cached_property
    def _dlog(self) -> dict[int, int]:
        table, acc = {}, 1
        for k in range(self.p):
            table[acc] = k
            acc = acc * self.g % self.q
        return table

    def dlog(self, point: int) -> int:
        return self._dlog[point]

    def mul(self, point, k):
        return pow(point, k % self.p, self.q)

    def add(self, a, b):
        return a * b % self.q

    def pair(self, a1, b2):
        return pow(self.g, self.dlog(a1) * self.dlog(b2) % self.p, self.q)

    def is_identity(self, point):
        return point == 1

    def _encode(self, point):
        return int(point).to_bytes(self.g1_len, "big")

    def _decode(self, data):
        if len(data) != self.g1_len:
            raise MalformedEncoding(f"element must be {self.g1_len} bytes, got {len(data)}")
        a = int.from_bytes(data, "big")
        if not 0 < a < self.q or pow(a, self.p, self.q) != 1:
            raise MalformedEncoding("not an element of the order-p subgroup")
        return a

    encode_g1 = encode_g2 = _encode
    decode_g1 = decode_g2 = _decode

    def describe(self):
        return {"curve_id": self.curve_id, "p": hex(self.p), "q": hex(self.q), "g": self.g, "seed": self.seed}


class BLS12381Params(GroupParams):
    curve_id = "bls12_381"

    def __init__(self):
        from py_arkworks_bls12381 import GT, G1Point, G2Point, Scalar

        self._G1, self._G2, self._GT, self._Scalar = G1Point, G2Point, GT, Scalar
        self.p = BLS12_381_R
        self.g1 = G1Point()
        self.g2 = G2Point()
        self.g1_len, self.g2_len = 48, 96

    def __eq__(self, other):
        return isinstance(other, BLS12381Params)

    def __hash__(self):
        return hash(self.curve_id)

    def __repr__(self):
        return "BLS12381Params()"

    def mul(self, point, k):
        return point * self._Scalar(k % self.p)

    def add(self, a, b):
        return a + b

    def pair(self, a1, b2):
        return self._GT.pairing(a1, b2)

    def is_identity(self, point):
        return point == type(point).identity()

    def encode_g1(self, point):
        return bytes(point.to_compressed_bytes())

    def encode_g2(self, point):
        return bytes(point.to_compressed_bytes())

    def _decode(self, cls, length, data):
        if len(data) != length:
            raise MalformedEncoding(f"element must be {length} bytes, got {len(data)}")
        try:
            return cls.from_compressed_bytes(bytes(data))
        except ValueError as exc:
            raise MalformedEncoding(str(exc)) from None

    def decode_g1(self, data):
        return self._decode(self._G1, 48, data)

    def decode_g2(self, data):
        return self._decode(self._G2, 96, data)


def setup(security_level: str = "bls12_381", seed: int | None = None) -> GroupParams:
    """Initialise the group for ``security_level`` (``desk_toy`` or ``bls12_381``)."""
    if security_level in ("desk_toy", "desk"):
        return DeskParams(seed=seed)
    if security_level in ("bls12_381", "production"):
        return BLS12381Params()
    raise ValueError(f"unknown security level {security_level!r}; expected one of {CURVES}")


def params_from_description(desc: dict) -> GroupParams:
    if desc["curve_id"] == "desk_toy":
        return DeskParams(seed=desc.get("seed"))
    return setup(desc["curve_id"])


# ---------------------------------------------------------------------------
# Keys and signatures
# ---------------------------------------------------------------------------


def _random_scalar(params: GroupParams, rng: np.random.Generator | None) -> int:
    """Uniform-ish draw from ``[0, p)``; 64 extra bits keep the modulo bias negligible."""
    nbytes = params.scalar_len + 8
    raw = secrets.token_bytes(nbytes) if rng is None else rng.bytes(nbytes)
    return int.from_bytes(raw, "big") % params.p


def _random_nonzero(params: GroupParams, rng) -> int:
    while True:
        k = _random_scalar(params, rng)
        if k:
            return k


@dataclass(frozen=True)
class PublicKey:
    u: Any
    v: Any
    params: GroupParams = field(repr=False, compare=False)

    def __eq__(self, other):
        return isinstance(other, PublicKey) and encode_pk(self) == encode_pk(other)

    def __hash__(self):
        return hash(encode_pk(self))


@dataclass(frozen=True)
class KeyPair:
    x: int
    y: int
    pk: PublicKey

    @property
    def sk(self) -> tuple[int, int]:
        return self.x, self.y


@dataclass(frozen=True)
class Signature:
    s: Any
    r: int


def keypair_from_secret(params: GroupParams, x: int, y: int) -> KeyPair:
    if not (1 <= x < params.p and 1 <= y < params.p):
        raise ValueError("secret scalars must lie in [1, p-1]")
    return KeyPair(x, y, PublicKey(params.mul(params.g2, x), params.mul(params.g2, y), params))


def keygen(params: GroupParams, rng: np.random.Generator | None = None) -> KeyPair:
    return keypair_from_secret(params, _random_nonzero(params, rng), _random_nonzero(params, rng))


def sign(
    m: int,
    sk: KeyPair | tuple[int, int],
    params: GroupParams,
    rng: np.random.Generator | None = None,
    r: int | None = None,
) -> Signature:
    """Sign scalar ``m``. A forced ``r`` that zeroes the denominator is resampled."""
    x, y = sk.sk if isinstance(sk, KeyPair) else sk
    p = params.p
    if not 0 <= m < p:
        raise ValueError("message scalar must lie in [0, p-1]")
    if r is None:
        r = _random_nonzero(params, rng)
    while (x + m + y * r) % p == 0:
        r = _random_nonzero(params, rng)
    exponent = pow((x + m + y * r) % p, -1, p)
    return Signature(params.mul(params.g1, exponent), r)


def verify(m: int, sig: Signature, pk: PublicKey, params: GroupParams) -> bool:
    if not 0 <= m < params.p or not 1 <= sig.r < params.p:
        return False
    if params.is_identity(sig.s):
        return False
    rhs = params.add(params.add(pk.u, params.mul(params.g2, m)), params.mul(pk.v, sig.r))
    return params.pair(sig.s, rhs) == params.gt


# ---------------------------------------------------------------------------
# Canonical encodings
# ---------------------------------------------------------------------------


def pk_len(params: GroupParams) -> int:
    return 2 * params.g2_len


def encode_pk(pk: PublicKey) -> bytes:
    return pk.params.encode_g2(pk.u) + pk.params.encode_g2(pk.v)


def decode_pk(data: bytes, params: GroupParams) -> PublicKey:
    n = params.g2_len
    if len(data) != 2 * n:
        raise MalformedEncoding(f"public key must be {2 * n} bytes, got {len(data)}")
    u, v = params.decode_g2(data[:n]), params.decode_g2(data[n:])
    if params.is_identity(u) or params.is_identity(v):
        raise MalformedEncoding("public key component is the identity")
    return PublicKey(u, v, params)


def encode_signature(sig: Signature, params: GroupParams) -> tuple[bytes, bytes]:
    return params.encode_g1(sig.s), params.encode_scalar(sig.r)


def decode_signature(s_bytes: bytes, r_bytes: bytes, params: GroupParams) -> Signature:
    return Signature(params.decode_g1(s_bytes), params.decode_scalar(r_bytes, nonzero=True))


def hash_to_scalar(message: bytes, params: GroupParams) -> int:
    """Map arbitrary bytes into ``[0, p-1]`` with SHAKE-256 under a domain tag."""
    digest = hashlib.shake_256(H2S_TAG + message).digest(params.scalar_len + 16)
    return int.from_bytes(digest, "big") % params.p


# ---------------------------------------------------------------------------
# Key files
# ---------------------------------------------------------------------------


def save_key(path: str | Path, key: KeyPair | PublicKey, params: GroupParams, include_secret: bool = True) -> None:
    pk = key.pk if isinstance(key, KeyPair) else key
    doc: dict[str, Any] = {"curve_id": params.curve_id}
    if isinstance(key, KeyPair) and include_secret:
        doc["sk"] = [format(key.x, "x"), format(key.y, "x")]
    doc["pk"] = encode_pk(pk).hex()
    doc["created_at"] = datetime.now(timezone.utc).isoformat()
    Path(path).write_text(json.dumps(doc, indent=2))


def load_key(path: str | Path, params: GroupParams) -> KeyPair | PublicKey:
    doc = json.loads(Path(path).read_text())
    if doc["curve_id"] != params.curve_id:
        raise ValueError(f"key file is for {doc['curve_id']}, params are {params.curve_id}")
    pk = decode_pk(bytes.fromhex(doc["pk"]), params)
    if "sk" not in doc:
        return pk
    kp = keypair_from_secret(params, int(doc["sk"][0], 16), int(doc["sk"][1], 16))
    if kp.pk != pk:
        raise ValueError("stored public key does not match the secret key")
    return kp
