"""Attack harness: ambiguity forgery, near-collision forging game, removal attacks."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .embedding import EmbeddingMatrix, extract
from .fl_sim import PARAM_ORDER, Dataset, DivergenceError, FLConfig, ToyModel, accuracy, sample_task
from .hash_watermark import Watermark, detection_rate
from .security_boundary import attacker_bound, cumulative_ball_size

# ---------------------------------------------------------------------------
# Ambiguity attack on watermark-as-credential verification
# ---------------------------------------------------------------------------


class DegenerateTarget(ValueError):
    """The host vector is zero, so no projection can carry a sign."""


@dataclass(frozen=True, eq=False)
class ForgedEmbedding:
    e_prime: np.ndarray
    target_bits: np.ndarray  # +1 / -1
    margin: float

    @property
    def watermark(self) -> Watermark:
        return Watermark.from_signs(self.target_bits)


def forge_embedding(w_t, target, margin: float = 1.0) -> ForgedEmbedding:
    """Column ``j`` is the minimum-norm ``e`` with ``w_t @ e == margin * b_j``."""
    w = np.asarray(w_t, dtype=np.float64)
    signs = target.signs() if isinstance(target, Watermark) else np.asarray(target, dtype=np.float64)
    if margin <= 0:
        raise ValueError("margin must be positive")
    if not np.all(np.abs(signs) == 1):
        raise ValueError("target must be a +1/-1 sign vector")
    norm2 = float(w @ w)
    if norm2 == 0.0:
        raise DegenerateTarget("w_t is the zero vector")
    e_prime = np.outer(w, margin * signs / norm2)
    return ForgedEmbedding(e_prime, signs.copy(), margin)


def credential_rate(w_t, e_prime: np.ndarray, claimed: Watermark) -> float:
    """Baseline verification: detection rate of ``claimed`` under a claimant-supplied matrix."""
    return detection_rate(claimed, extract(w_t, e_prime))


@dataclass
class AmbiguityReport:
    forged_rate: float
    params_unchanged: bool
    acc_before: float
    acc_after: float
    fedsov_verdict: str | None = None

    @property
    def acc_delta(self) -> float:
        return self.acc_after - self.acc_before

    @property
    def conditions(self) -> dict[str, bool]:
        return {
            "forged_credential_verifies": self.forged_rate == 1.0,
            "model_unmodified": self.params_unchanged,
            "accuracy_preserved": self.acc_delta == 0.0,
        }

    @property
    def succeeded(self) -> bool:
        return all(self.conditions.values())

    def to_json(self) -> dict:
        return {**asdict(self), "acc_delta": self.acc_delta, "conditions": self.conditions, "succeeded": self.succeeded}


def ambiguity_attack_demo(
    model: ToyModel,
    test: Dataset,
    n_bits: int,
    rng: np.random.Generator,
    margin: float = 1.0,
    fedsov_check: Callable[[], str] | None = None,
) -> AmbiguityReport:
    """Forge a fresh credential for ``model`` and check the three ambiguity conditions.

    ``fedsov_check`` runs the same adversary against signature-backed
    verification and returns its verdict.
    """
    digest_before = model.sha256()
    acc_before = accuracy(model, test)
    claimed = Watermark(rng.integers(0, 2, size=n_bits, dtype=np.uint8))
    forged = forge_embedding(model.host, claimed, margin)
    rate = credential_rate(model.host, forged.e_prime, claimed)
    report = AmbiguityReport(
        forged_rate=rate,
        params_unchanged=model.sha256() == digest_before,
        acc_before=acc_before,
        acc_after=accuracy(model, test),
    )
    if fedsov_check is not None:
        report.fedsov_verdict = fedsov_check()
    return report


# ---------------------------------------------------------------------------
# Near-collision forging game
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GameResult:
    n: int
    err: int
    k: int
    repetitions: int
    successes: int
    bound: float
    exact: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.repetitions

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.exact * (1 - self.exact) / self.repetitions))


def exact_game_success(n: int, err: int, k: int) -> float:
    radius = min(2 * err, n)
    p_single = cumulative_ball_size(n, radius) / 2**n
    return 1.0 - (1.0 - p_single) ** k


def near_collision_forging_game(
    n: int, err: int, k: int, rng: np.random.Generator, repetitions: int = 10_000
) -> GameResult:
    """Attacker draws ``k`` random digests per game; wins on any within ``2*err`` of the target."""
    if not 1 <= n <= 24:
        raise ValueError("the game is only exhaustible for n <= 24")
    if k < 0 or err < 0 or repetitions < 1:
        raise ValueError("k, err must be >= 0 and repetitions >= 1")
    bound = attacker_bound(n, err, max(k, 1), 1).probability if k else 0.0
    exact = exact_game_success(n, err, k)
    if k == 0:
        return GameResult(n, err, k, repetitions, 0, bound, exact)
    targets = rng.integers(0, 1 << n, size=repetitions, dtype=np.uint32)
    successes = 0
    chunk = max(1, (1 << 20) // k)
    for start in range(0, repetitions, chunk):
        t = targets[start : start + chunk]
        cand = rng.integers(0, 1 << n, size=(t.shape[0], k), dtype=np.uint32)
        dist = np.bitwise_count(cand ^ t[:, None])
        successes += int(np.count_nonzero((dist <= 2 * err).any(axis=1)))
    return GameResult(n, err, k, repetitions, successes, bound, exact)


# ---------------------------------------------------------------------------
# Removal attacks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RemovalAttackConfig:
    kind: str
    epochs: int = 50
    prune_rate: float = 0.0
    phi: float = 0.5
    seed: int = 0
    learning_rate: float = 0.01
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in ("finetune", "prune", "gaussian_target"):
            raise ValueError(f"unknown removal attack {self.kind!r}")
        if self.epochs < 0 or self.learning_rate < 0:
            raise ValueError("epochs and learning_rate must be >= 0")
        if not 0 <= self.prune_rate < 1:
            raise ValueError("prune_rate must lie in [0, 1)")
        if self.kind == "gaussian_target" and not 0 < self.phi < 1:
            raise ValueError("phi must lie in (0, 1)")


@dataclass(frozen=True)
class AttackTarget:
    """What the evaluator knows: held-out data plus the public watermark and matrix."""

    test: Dataset
    embedding: EmbeddingMatrix
    watermark: Watermark

    def evaluate(self, model: ToyModel) -> dict[str, float]:
        return {
            "acc": accuracy(model, self.test),
            "rate": detection_rate(self.watermark, extract(model.host, self.embedding)),
        }


@dataclass
class AttackResult:
    attack_kind: str
    params: dict[str, Any]
    model: ToyModel
    before: dict[str, float]
    after: dict[str, float]
    trace: list[dict[str, float]] = field(default_factory=list)

    def to_report(self) -> dict:
        return {
            "attack_kind": self.attack_kind,
            "params": self.params,
            "before": self.before,
            "after": self.after,
            "trace": self.trace,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_report(), indent=2))


def attacker_dataset(cfg: FLConfig, count: int = 2000, stream: int = 100) -> Dataset:
    """Fresh samples from the task distribution, disjoint stream from clients and test set."""
    return sample_task(cfg.task, cfg.seed, count, stream=stream)


def finetune_attack(
    model: ToyModel,
    data: Dataset,
    target: AttackTarget,
    cfg: RemovalAttackConfig,
) -> AttackResult:
    """Continue SGD on the task loss only; one trace row per epoch."""
    before = target.evaluate(model)
    attacked = model.copy()
    rng = np.random.default_rng([cfg.seed, 0xF7])
    trace = [{"epoch": 0, **before}]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = attacked.task_loss_and_grad(data.x[idx], data.y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"fine-tuning diverged at epoch {epoch} (loss {loss})")
            for k in PARAM_ORDER:
                attacked.params[k] -= cfg.learning_rate * grads[k]
        trace.append({"epoch": epoch, **target.evaluate(attacked)})
    params = {"epochs": cfg.epochs, "learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size, "seed": cfg.seed}
    after = {"acc": trace[-1]["acc"], "rate": trace[-1]["rate"]}
    return AttackResult("finetune", params, attacked, before, after, trace)


def prune_attack(model: ToyModel, prune_rate: float, target: AttackTarget) -> AttackResult:
    """Global magnitude pruning: zero the ``prune_rate`` fraction of smallest-|w| parameters."""
    if not 0 <= prune_rate < 1:
        raise ValueError("prune_rate must lie in [0, 1)")
    before = target.evaluate(model)
    attacked = model.copy()
    flat = np.concatenate([attacked.params[k].ravel() for k in PARAM_ORDER])
    count = int(np.floor(prune_rate * flat.size))
    if count:
        drop = np.argsort(np.abs(flat), kind="stable")[:count]
        flat[drop] = 0.0
        offset = 0
        for k in PARAM_ORDER:
            size = attacked.params[k].size
            attacked.params[k] = flat[offset : offset + size].reshape(attacked.params[k].shape).copy()
            offset += size
    after = target.evaluate(attacked)
    return AttackResult("prune", {"prune_rate": prune_rate}, attacked, before, after, [after])


def gaussian_target_attack(model: ToyModel, phi: float, rng: np.random.Generator, target: AttackTarget) -> AttackResult:
    """Add ``N(mean, phi * var)`` noise, with the host slice's own statistics, to the host slice only."""
    if not 0 < phi < 1:
        raise ValueError("phi must lie in (0, 1)")
    before = target.evaluate(model)
    attacked = model.copy()
    gamma = attacked.host
    mean = float(gamma.mean())
    var = float(((gamma - mean) ** 2).mean())
    noise = rng.normal(mean, np.sqrt(phi * var), size=gamma.shape)
    attacked.params["gamma"] = gamma + noise
    after = target.evaluate(attacked)
    params = {"phi": phi, "slice_mean": mean, "slice_var": var}
    return AttackResult("gaussian_target", params, attacked, before, after, [after])


def run_removal_attack(
    model: ToyModel, target: AttackTarget, cfg: RemovalAttackConfig, data: Dataset | None = None
) -> AttackResult:
    if cfg.kind == "finetune":
        if data is None:
            raise ValueError("fine-tuning needs attacker data")
        return finetune_attack(model, data, target, cfg)
    if cfg.kind == "prune":
        return prune_attack(model, cfg.prune_rate, target)
    return gaussian_target_attack(model, cfg.phi, np.random.default_rng(cfg.seed), target)


def write_sweep_csv(rows: Sequence[dict], path: str | Path) -> None:
    if not rows:
        raise ValueError("empty sweep")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
