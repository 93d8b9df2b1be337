import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsov import pairing_sig as ps
from oracles import egcd_inverse


def test_desk_setup_is_prime_order_subgroup(desk):
    assert desk.p == 1009
    assert all(desk.p % d for d in range(2, 32))
    # order of g found by brute force
    acc, order = desk.g, 1
    while acc != 1:
        acc = acc * desk.g % desk.q
        order += 1
    assert order == desk.p


def test_desk_setup_deterministic():
    assert ps.setup("desk_toy", seed=1) == ps.setup("desk_toy", seed=1)
    assert ps.setup("desk_toy", seed=1).g == 1806


def test_production_pairing_non_degenerate(bls):
    assert bls.gt != bls.pair(bls.g1, bls.mul(bls.g2, 0))
    assert not bls.is_identity(bls.g1)


def test_production_bilinear(bls):
    a, b = 123456789, 987654321
    assert bls.pair(bls.mul(bls.g1, a), bls.mul(bls.g2, b)) == bls.pair(bls.mul(bls.g1, a * b % bls.p), bls.g2)


def test_desk_bilinear_exhaustive_grid(desk):
    e_gg = desk.pair(desk.g1, desk.g2)
    assert e_gg != 1
    for a in range(0, 40):
        for b in range(0, 40):
            lhs = desk.pair(desk.mul(desk.g1, a), desk.mul(desk.g2, b))
            assert lhs == pow(e_gg, a * b, desk.q)


def test_keygen_forced_secret(desk):
    kp = ps.keypair_from_secret(desk, 3, 5)
    assert kp.pk.u == pow(desk.g, 3, desk.q)
    assert kp.pk.v == pow(desk.g, 5, desk.q)


def test_keygen_rejects_zero_secret(desk):
    with pytest.raises(ValueError):
        ps.keypair_from_secret(desk, 0, 5)


def test_keygen_resamples_zero(desk):
    class ZeroFirst:
        """Byte source whose first draw reduces to 0 mod p."""

        def __init__(self):
            self.calls = 0
            self.inner = np.random.default_rng(0)

        def bytes(self, n):
            self.calls += 1
            if self.calls == 1:
                return desk.p.to_bytes(n, "big")
            return self.inner.bytes(n)

    src = ZeroFirst()
    kp = ps.keygen(desk, src)
    assert 1 <= kp.x < desk.p and src.calls >= 3


def test_keygen_distinct(bls):
    encs = {ps.encode_pk(ps.keygen(bls, np.random.default_rng(i)).pk) for i in range(100)}
    assert len(encs) == 100


def test_sign_forced_r_matches_euclid(desk):
    kp = ps.keypair_from_secret(desk, 3, 5)
    sig = ps.sign(7, kp, desk, r=11)
    inv = egcd_inverse(65, 1009)
    assert inv == 326
    assert sig.r == 11
    assert sig.s == pow(desk.g, inv, desk.q)
    assert ps.verify(7, sig, kp.pk, desk)


def test_sign_resamples_zero_denominator(desk):
    kp = ps.keypair_from_secret(desk, 3, 5)
    m = 7
    # 3 + 7 + 5r = 0 mod 1009  ->  r = -10 / 5
    r_bad = (-10 * pow(5, -1, desk.p)) % desk.p
    assert (3 + m + 5 * r_bad) % desk.p == 0
    sig = ps.sign(m, kp, desk, np.random.default_rng(0), r=r_bad)
    assert sig.r != r_bad
    assert ps.verify(m, sig, kp.pk, desk)


def test_verify_rejects_changed_message(bls):
    kp = ps.keygen(bls, np.random.default_rng(1))
    sig = ps.sign(42, kp, bls, np.random.default_rng(2))
    assert ps.verify(42, sig, kp.pk, bls)
    assert not ps.verify(43, sig, kp.pk, bls)


def test_desk_correctness_exhaustive_messages(desk):
    kp = ps.keypair_from_secret(desk, 17, 29)
    rng = np.random.default_rng(3)
    for m in range(desk.p):
        assert ps.verify(m, ps.sign(m, kp, desk, rng), kp.pk, desk)


def test_desk_verify_matches_exponent_algebra(desk):
    """accept <=> dlog(s) * (x + m + y r) == 1 mod p, over every s for a sample of (m, r)."""
    x, y = 101, 202
    kp = ps.keypair_from_secret(desk, x, y)
    rng = np.random.default_rng(4)
    for _ in range(20):
        m, r = int(rng.integers(0, desk.p)), int(rng.integers(1, desk.p))
        for a in range(1, desk.p):
            accept = ps.verify(m, ps.Signature(pow(desk.g, a, desk.q), r), kp.pk, desk)
            assert accept == (a * (x + m + y * r) % desk.p == 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(0, 2**255))
def test_production_round_trip(bls, seed, m):
    rng = np.random.default_rng(seed)
    kp = ps.keygen(bls, rng)
    m %= bls.p
    assert ps.verify(m, ps.sign(m, kp, bls, rng), kp.pk, bls)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), field_idx=st.integers(0, 4), bit=st.integers(0, 10_000))
def test_single_bit_flip_rejects(bls, seed, field_idx, bit):
    rng = np.random.default_rng(seed)
    kp = ps.keygen(bls, rng)
    m = int(rng.integers(0, 2**62))
    sig = ps.sign(m, kp, bls, rng)
    parts = [bls.encode_scalar(m), *ps.encode_signature(sig, bls), bls.encode_g2(kp.pk.u), bls.encode_g2(kp.pk.v)]
    buf = bytearray(parts[field_idx])
    b = bit % (8 * len(buf))
    buf[b // 8] ^= 1 << (b % 8)
    parts[field_idx] = bytes(buf)
    try:
        m2 = bls.decode_scalar(parts[0])
        sig2 = ps.decode_signature(parts[1], parts[2], bls)
        pk2 = ps.decode_pk(parts[3] + parts[4], bls)
    except ps.MalformedEncoding:
        return
    assert not ps.verify(m2, sig2, pk2, bls)


def test_pk_encoding_round_trip(bls, desk):
    for group in (bls, desk):
        kp = ps.keygen(group, np.random.default_rng(5))
        enc = ps.encode_pk(kp.pk)
        assert len(enc) == ps.pk_len(group)
        assert ps.decode_pk(enc, group) == kp.pk
        other = ps.keygen(group, np.random.default_rng(6))
        assert ps.encode_pk(other.pk) != enc
        with pytest.raises(ps.MalformedEncoding):
            ps.decode_pk(enc[:-1], group)


def test_decode_rejects_off_subgroup(desk):
    # 2 generates a larger subgroup of Z_q^* than the order-p one
    assert pow(2, desk.p, desk.q) != 1
    with pytest.raises(ps.MalformedEncoding):
        desk.decode_g2((2).to_bytes(2, "big"))


def test_signature_scalar_out_of_range(bls):
    with pytest.raises(ps.MalformedEncoding):
        bls.decode_scalar(b"\xff" * 32)


def test_hash_to_scalar(bls, desk):
    assert ps.hash_to_scalar(b"abc", bls) == ps.hash_to_scalar(b"abc", bls)
    assert 0 <= ps.hash_to_scalar(b"", bls) < bls.p
    rng = np.random.default_rng(7)
    for group in (bls, desk):
        vals = [ps.hash_to_scalar(rng.bytes(int(rng.integers(0, 64))), group) for _ in range(10_000)]
        assert max(vals) <= group.p - 1 and min(vals) >= 0


def test_desk_determinism(desk):
    a = ps.keygen(desk, np.random.default_rng(9))
    b = ps.keygen(desk, np.random.default_rng(9))
    assert a == b
    assert ps.sign(5, a, desk, np.random.default_rng(1)) == ps.sign(5, b, desk, np.random.default_rng(1))


def test_key_file_round_trip(tmp_path, bls):
    kp = ps.keygen(bls, np.random.default_rng(10))
    ps.save_key(tmp_path / "k.json", kp, bls)
    assert ps.load_key(tmp_path / "k.json", bls) == kp
    ps.save_key(tmp_path / "pk.json", kp, bls, include_secret=False)
    assert ps.load_key(tmp_path / "pk.json", bls) == kp.pk
