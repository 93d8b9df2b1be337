"""Sign-projection watermark embedding on a host parameter vector.

A host vector ``w`` (length omega) carries an n-bit watermark through a
seeded Gaussian matrix ``E`` (omega x n): bit ``i`` reads as ``(w @ E)[i] > 0``.
Embedding minimises the hinge ``alpha * sum(max(0, mu - t_i * (w @ E)_i))``
with ``t_i = +1`` for bit 1 and ``-1`` for bit 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hash_watermark import Watermark, detection_rate


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    entries: np.ndarray
    seed: int
    omega: int
    n: int

    def __post_init__(self):
        if self.entries.shape != (self.omega, self.n):
            raise ValueError(f"entries shape {self.entries.shape} != ({self.omega}, {self.n})")

    def __eq__(self, other):
        return isinstance(other, EmbeddingMatrix) and np.array_equal(self.entries, other.entries)

    def to_json(self) -> dict:
        return {"omega": self.omega, "n": self.n, "seed": self.seed}

    @classmethod
    def from_json(cls, doc: dict) -> "EmbeddingMatrix":
        return gen_embedding_matrix(int(doc["omega"]), int(doc["n"]), int(doc["seed"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingMatrix":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class HingeConfig:
    alpha: float = 0.5
    mu: float = 0.1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.mu > 0:
            raise ValueError("mu must be positive")


def gen_embedding_matrix(omega: int, n: int, seed: int) -> EmbeddingMatrix:
    if omega < 1 or n < 1:
        raise ValueError("omega and n must be >= 1")
    entries = np.random.default_rng(seed).standard_normal((omega, n))
    entries.setflags(write=False)
    return EmbeddingMatrix(entries, seed, omega, n)


def _as_matrix(e) -> np.ndarray:
    return e.entries if isinstance(e, EmbeddingMatrix) else np.asarray(e, dtype=np.float64)


def _projections(w, e) -> np.ndarray:
    mat = _as_matrix(e)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != mat.shape[0]:
        raise ValueError(f"host vector of shape {w.shape} does not match matrix {mat.shape}")
    return w @ mat


def _target_signs(target, n: int) -> np.ndarray:
    t = target.signs() if isinstance(target, Watermark) else np.asarray(target, dtype=np.float64)
    if t.shape != (n,):
        raise ValueError(f"target has {t.shape[0]} bits, matrix has {n} columns")
    return t


def extract(w, e) -> Watermark:
    """``sgn(w @ E)`` as bits; an exactly-zero projection reads as 0."""
    return Watermark((_projections(w, e) > 0).astype(np.uint8))


def hinge_loss(w, e, target, cfg: HingeConfig = HingeConfig()) -> float:
    proj = _projections(w, e)
    t = _target_signs(target, proj.shape[0])
    return float(cfg.alpha * np.maximum(0.0, cfg.mu - t * proj).sum())


def hinge_grad(w, e, target, cfg: HingeConfig = HingeConfig()) -> np.ndarray:
    proj = _projections(w, e)
    t = _target_signs(target, proj.shape[0])
    active = cfg.mu - t * proj > 0
    return -cfg.alpha * (_as_matrix(e)[:, active] @ t[active])


@dataclass
class EmbedResult:
    w: np.ndarray
    loss: float
    rate: float
    steps: int
    converged: bool


def embed_standalone(
    w0,
    e: EmbeddingMatrix,
    target: Watermark,
    cfg: HingeConfig = HingeConfig(),
    step_size: float = 0.05,
    iterations: int = 500,
) -> EmbedResult:
    """Gradient descent on the hinge loss alone; stops once the loss hits zero."""
    w = np.array(w0, dtype=np.float64)
    steps = 0
    loss = hinge_loss(w, e, target, cfg)
    while loss > 0 and steps < iterations:
        w -= step_size * hinge_grad(w, e, target, cfg)
        steps += 1
        loss = hinge_loss(w, e, target, cfg)
    rate = detection_rate(target, extract(w, e))
    return EmbedResult(w=w, loss=loss, rate=rate, steps=steps, converged=loss == 0.0)


def save_host(path: str | Path, w: np.ndarray) -> None:
    """Little-endian float64 vector plus ``.json`` sidecar ``{omega}``."""
    path = Path(path)
    path.write_bytes(np.asarray(w, dtype="<f8").tobytes())
    path.with_suffix(".json").write_text(json.dumps({"omega": int(np.asarray(w).size)}))


def load_host(path: str | Path) -> np.ndarray:
    path = Path(path)
    omega = json.loads(path.with_suffix(".json").read_text())["omega"]
    w = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    if w.size != omega:
        raise ValueError(f"host file holds {w.size} values, sidecar says {omega}")
    return w
