import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedsov import pairing_sig as ps
from fedsov.hash_watermark import (
    ConcatenatedKey,
    Watermark,
    detection_errors,
    detection_rate,
    generate_watermark,
    hamming_distance,
    is_near_collision,
    near_collision_frequency,
    write_diff_csv,
)
from fedsov.security_boundary import cumulative_ball_size
from oracles import shake256


def wm(bits):
    return Watermark(np.array(bits, dtype=np.uint8))


bitvec = st.integers(8, 96).flatmap(lambda n: st.tuples(*[st.lists(st.integers(0, 1), min_size=n, max_size=n)] * 3))


def test_reference_shake_vector():
    assert shake256(b"", 32).hex() == "46b9dd2b0ba88d13233b3feb743eeb243fcd52ea62b81b82b50c27646ed5762f"


def test_generate_matches_reference_bits():
    data = b"fixed input for the watermark"
    h = generate_watermark(data, 32)
    digest = shake256(b"FEDSOV-WM-v1" + data, 4)
    expected = [(digest[i // 8] >> (i % 8)) & 1 for i in range(32)]
    assert h.bits.tolist() == expected


def test_generate_deterministic_and_fixed_length(bls):
    keys = [ps.encode_pk(ps.keygen(bls, np.random.default_rng(i)).pk) for i in range(3)]
    con = ConcatenatedKey(tuple(keys))
    assert generate_watermark(con, 256) == generate_watermark(con, 256)
    for k in (1, 10, 1000):
        con_k = ConcatenatedKey(tuple(bytes([i % 256]) * 192 for i in range(k)))
        assert generate_watermark(con_k, 256).n == 256


def test_order_sensitive():
    rng = np.random.default_rng(0)
    pks = [rng.bytes(192) for _ in range(8)]
    seen = set()
    for _ in range(100):
        perm = rng.permutation(8)
        seen.add(generate_watermark(ConcatenatedKey(tuple(pks[i] for i in perm)), 256).to_bytes())
    assert len(seen) >= 99


def test_length_bounds():
    with pytest.raises(ValueError):
        generate_watermark(b"x", 7)


def test_hamming_examples():
    a = wm([0, 1] * 8)
    assert hamming_distance(a, a) == 0
    assert hamming_distance(a, a.flip(range(16))) == 16
    rng = np.random.default_rng(1)
    x, y = rng.integers(0, 2, 64), rng.integers(0, 2, 64)
    naive = sum(1 for i in range(64) if x[i] != y[i])
    assert hamming_distance(wm(x), wm(y)) == naive == detection_errors(wm(x), wm(y))
    with pytest.raises(ValueError):
        hamming_distance(wm([0] * 8), wm([0] * 9))


@given(bitvec)
def test_metric_axioms(vecs):
    a, b, c = (wm(v) for v in vecs)
    assert hamming_distance(a, b) == hamming_distance(b, a)
    assert (hamming_distance(a, b) == 0) == (a == b)
    assert hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c)
    assert detection_rate(a, b) == 1 - detection_errors(a, b) / a.n


def test_detection_rate_examples():
    h = wm([1, 0, 1, 1, 0, 0, 1, 0])
    assert detection_rate(h, h) == 1.0
    assert detection_rate(h, h.flip([0, 5])) == 0.75
    big = Watermark(np.zeros(2048, dtype=np.uint8))
    assert detection_rate(big, big.flip(range(366))) == pytest.approx(0.8213, abs=5e-5)


def test_near_collision_inclusive():
    a = wm([0] * 16)
    assert is_near_collision(a, a, 0)
    b = a.flip(range(5))
    assert not is_near_collision(a, b, 4)
    assert is_near_collision(a, b, 5)


def test_frequency_matches_exact():
    p = 137 / 65536
    assert cumulative_ball_size(16, 2) == 137
    f = near_collision_frequency(16, 2, 100_000, np.random.default_rng(2))
    assert abs(f - p) <= 3 * np.sqrt(p * (1 - p) / 100_000)
    assert near_collision_frequency(12, 12, 1000, np.random.default_rng(3)) == 1.0
    f0 = near_collision_frequency(8, 0, 1_000_000, np.random.default_rng(4))
    assert abs(f0 - 1 / 256) <= 3 * np.sqrt((1 / 256) * (255 / 256) / 1_000_000)


def test_watermark_file_round_trip(tmp_path):
    h = generate_watermark(b"abc", 77)
    h.save(tmp_path / "w.json")
    assert Watermark.load(tmp_path / "w.json") == h
    write_diff_csv(h, h.flip([3]), tmp_path / "diff.csv")
    lines = (tmp_path / "diff.csv").read_text().splitlines()
    assert lines[0] == "index,expected,extracted,match" and len(lines) == 78
    assert lines[4].endswith(",0")


def test_pk_con_file_round_trip(tmp_path):
    con = ConcatenatedKey((b"a" * 4, b"b" * 4, b"c" * 4))
    con.save(tmp_path / "pk_con.bin")
    back = ConcatenatedKey.load(tmp_path / "pk_con.bin")
    assert back == con and back[1] == b"bbbb"
    with pytest.raises(ValueError):
        ConcatenatedKey.from_bytes(b"abcde", 2)
