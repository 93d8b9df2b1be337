"""Three-role ownership verification: watermark check, then challenge-response signature.

The verifier never trusts a client-supplied public key: ``pk_i`` is sliced
out of the server-published ``pk_con`` by offset, so the signature check is
bound to a key that is actually digested into the model's watermark.
"""

from __future__ import annotations

import json
import secrets
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

import numpy as np

from . import pairing_sig as ps
from .embedding import EmbeddingMatrix, extract, gen_embedding_matrix
from .fl_sim import ToyModel
from .hash_watermark import ConcatenatedKey, Watermark, generate_watermark, hamming_distance
from .security_boundary import solve_boundary

OWNER_VERIFIED = "owner_verified"
WATERMARK_CHECK_FAILED = "watermark_check_failed"
SIGNATURE_FAILED = "signature_failed"
VERDICTS = (OWNER_VERIFIED, WATERMARK_CHECK_FAILED, SIGNATURE_FAILED)

CHALLENGE_BYTES = 32
HASH_SPEC = "SHAKE256/FEDSOV-WM-v1"


@dataclass(frozen=True)
class SystemPublicParams:
    position: str  # host-slice selector inside the model
    embedding_seed: int
    omega: int
    n: int
    group: dict  # pairing_sig.GroupParams.describe()
    target_pa_log2: float
    err_n: int
    r_n: float
    hash_spec: str = HASH_SPEC

    def __post_init__(self):
        solved = solve_boundary(self.n, self.target_pa_log2)
        if solved.err_n != self.err_n or float(solved.r_n) != self.r_n:
            raise ValueError("err_n / r_n do not match the boundary for (n, target_pa_log2)")

    @classmethod
    def create(
        cls,
        n: int,
        omega: int,
        embedding_seed: int,
        group: ps.GroupParams,
        target_pa_log2: float = -128.0,
        position: str = "gamma",
    ) -> "SystemPublicParams":
        b = solve_boundary(n, target_pa_log2)
        return cls(position, embedding_seed, omega, n, group.describe(), float(target_pa_log2), b.err_n, float(b.r_n))

    def embedding(self) -> EmbeddingMatrix:
        return gen_embedding_matrix(self.omega, self.n, self.embedding_seed)

    def group_params(self) -> ps.GroupParams:
        return ps.params_from_description(self.group)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "SystemPublicParams":
        return cls(**doc)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "SystemPublicParams":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class WatermarkCheck:
    extracted: Watermark
    expected: Watermark
    distance: int
    threshold: int
    passed: bool


def host_slice(model: ToyModel, pp: SystemPublicParams) -> np.ndarray:
    if pp.position not in model.params:
        raise ValueError(f"model has no parameter {pp.position!r}")
    w = model.params[pp.position]
    if w.shape != (pp.omega,):
        raise ValueError(f"host slice has shape {w.shape}, expected ({pp.omega},)")
    return w


def watermark_check(
    model: ToyModel,
    pk_con: ConcatenatedKey,
    pp: SystemPublicParams,
    embedding: EmbeddingMatrix | None = None,
) -> WatermarkCheck:
    """Pass iff ``hamming(H(pk_con), extract(model)) < err_n`` (strict)."""
    group = pp.group_params()
    for pk in pk_con.client_pks:
        ps.decode_pk(pk, group)
    expected = generate_watermark(pk_con, pp.n)
    extracted = extract(host_slice(model, pp), embedding or pp.embedding())
    d = hamming_distance(expected, extracted)
    return WatermarkCheck(extracted, expected, d, pp.err_n, d < pp.err_n)


# ---------------------------------------------------------------------------
# Roles
# ---------------------------------------------------------------------------


class Signer(Protocol):
    def respond(self, challenge: bytes) -> ps.Signature: ...


class Verifier:
    """Issues fresh 32-byte challenges; pass a seeded generator for reproducible tests."""

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng

    def _bytes(self, count: int) -> bytes:
        return secrets.token_bytes(count) if self.rng is None else self.rng.bytes(count)

    def challenge(self) -> bytes:
        return self._bytes(CHALLENGE_BYTES)

    def new_session_id(self) -> str:
        return uuid.UUID(bytes=self._bytes(16), version=4).hex


@dataclass
class HonestClient:
    keypair: ps.KeyPair
    group: ps.GroupParams
    rng: np.random.Generator | None = None

    def respond(self, challenge: bytes) -> ps.Signature:
        return ps.sign(ps.hash_to_scalar(challenge, self.group), self.keypair, self.group, self.rng)


@dataclass
class ReplayAdversary:
    """Holds only public transcripts; answers with a previously observed signature."""

    observed: list[dict]
    group: ps.GroupParams
    own_key: ps.KeyPair | None = None

    def respond(self, challenge: bytes) -> ps.Signature:
        for t in reversed(self.observed):
            if t.get("sig"):
                return ps.decode_signature(bytes.fromhex(t["sig"]["s_hex"]), bytes.fromhex(t["sig"]["r_hex"]), self.group)
        # nothing to replay: sign with a key of its own, which is not in pk_con
        key = self.own_key or ps.keygen(self.group)
        return ps.sign(ps.hash_to_scalar(challenge, self.group), key, self.group)


# ---------------------------------------------------------------------------
# Transcript
# ---------------------------------------------------------------------------


@dataclass
class VerificationTranscript:
    session_id: str
    model_sha256: str
    n: int
    err_n: int
    distance: int
    wm_pass: bool
    challenge_hex: str | None
    sig: dict | None
    pk_index: int
    sig_pass: bool
    verdict: str
    ts: str
    extracted_hex: str
    curve_id: str
    events: list[dict] = field(default_factory=list, repr=False)

    def record(self) -> dict:
        doc = asdict(self)
        doc.pop("events")
        return doc

    def to_json(self) -> str:
        return json.dumps(self.record(), sort_keys=True)

    @classmethod
    def from_record(cls, doc: dict) -> "VerificationTranscript":
        return cls(**doc)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def verify_ownership(
    model: ToyModel,
    pk_con: ConcatenatedKey,
    client_index: int,
    signer: Signer,
    pp: SystemPublicParams,
    verifier: Verifier | None = None,
    session_dir: str | Path | None = None,
    embedding: EmbeddingMatrix | None = None,
) -> VerificationTranscript:
    """Watermark check, then (only on pass) one challenge-response round with ``pk_con[client_index]``."""
    if not 0 <= client_index < pk_con.K:
        raise IndexError(f"client index {client_index} outside [0, {pk_con.K})")
    verifier = verifier or Verifier()
    group = pp.group_params()
    session_id = verifier.new_session_id()
    events: list[dict] = []

    check = watermark_check(model, pk_con, pp, embedding)
    events.append({"event": "watermark_check", "distance": check.distance, "threshold": check.threshold, "passed": check.passed})

    challenge_hex, sig_doc, sig_pass = None, None, False
    if check.passed:
        m = verifier.challenge()
        challenge_hex = m.hex()
        events.append({"event": "challenge", "challenge_hex": challenge_hex})
        sigma = signer.respond(m)
        s_bytes, r_bytes = ps.encode_signature(sigma, group)
        sig_doc = {"s_hex": s_bytes.hex(), "r_hex": r_bytes.hex()}
        events.append({"event": "response", "sig": sig_doc})
        pk_i = ps.decode_pk(pk_con[client_index], group)
        sig_pass = ps.verify(ps.hash_to_scalar(m, group), sigma, pk_i, group)
        verdict = OWNER_VERIFIED if sig_pass else SIGNATURE_FAILED
    else:
        verdict = WATERMARK_CHECK_FAILED

    transcript = VerificationTranscript(
        session_id=session_id,
        model_sha256=model.sha256(),
        n=pp.n,
        err_n=pp.err_n,
        distance=check.distance,
        wm_pass=check.passed,
        challenge_hex=challenge_hex,
        sig=sig_doc,
        pk_index=client_index,
        sig_pass=sig_pass,
        verdict=verdict,
        ts=_now(),
        extracted_hex=check.extracted.to_bytes().hex(),
        curve_id=group.curve_id,
        events=events,
    )
    if session_dir is not None:
        write_transcript(transcript, session_dir)
    return transcript


def write_transcript(t: VerificationTranscript, session_dir: str | Path) -> Path:
    """Append event lines then the final record to ``<session_dir>/<session_id>/transcript.jsonl``."""
    path = Path(session_dir) / t.session_id / "transcript.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for ev in t.events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
        fh.write(json.dumps({"event": "verdict", "transcript": t.record()}, sort_keys=True) + "\n")
    return path


def read_transcript(path: str | Path) -> VerificationTranscript:
    lines = Path(path).read_text().splitlines()
    events = [json.loads(line) for line in lines]
    final = [e for e in events if e["event"] == "verdict"]
    if not final:
        raise ValueError(f"{path} holds no verdict")
    t = VerificationTranscript.from_record(final[-1]["transcript"])
    t.events = [e for e in events if e["event"] != "verdict"]
    return t


def recheck_transcript(t: VerificationTranscript, pk_con: ConcatenatedKey, pp: SystemPublicParams) -> VerificationTranscript:
    """Recompute distance, both checks and the verdict from stored fields only."""
    group = pp.group_params()
    extracted = Watermark.from_bytes(bytes.fromhex(t.extracted_hex), t.n)
    distance = hamming_distance(generate_watermark(pk_con, t.n), extracted)
    wm_pass = distance < t.err_n
    sig_pass = False
    if wm_pass and t.sig is not None and t.challenge_hex is not None:
        try:
            sigma = ps.decode_signature(bytes.fromhex(t.sig["s_hex"]), bytes.fromhex(t.sig["r_hex"]), group)
            pk_i = ps.decode_pk(pk_con[t.pk_index], group)
            m = ps.hash_to_scalar(bytes.fromhex(t.challenge_hex), group)
            sig_pass = ps.verify(m, sigma, pk_i, group)
        except ps.MalformedEncoding:
            sig_pass = False
    verdict = WATERMARK_CHECK_FAILED if not wm_pass else (OWNER_VERIFIED if sig_pass else SIGNATURE_FAILED)
    doc = t.record() | {"distance": distance, "wm_pass": wm_pass, "sig_pass": sig_pass, "verdict": verdict}
    return VerificationTranscript.from_record(doc)
