"""Deterministic FedAvg simulation with a hash watermark embedded during local training.

Toy model: ``x -> dense -> channel scale (gamma, beta) -> relu -> classifier``.
The channel-scale vector ``gamma`` (length omega) hosts the watermark.

Two modes:

* ``fedsov``: one hash watermark ``h = H(pk_1 || ... || pk_K)`` and one shared
  embedding matrix; every client regularises toward the same ``h``.
* ``fedipr``: every client draws its own random ``b``-bit watermark and its own
  embedding matrix; all ``K*b`` bits compete for the same omega parameters.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pairing_sig as ps
from .embedding import EmbeddingMatrix, HingeConfig, extract, gen_embedding_matrix, hinge_grad, hinge_loss
from .hash_watermark import ConcatenatedKey, Watermark, detection_rate, generate_watermark

log = logging.getLogger(__name__)

PARAM_ORDER = ("W1", "b1", "gamma", "beta", "W2", "b2")
HOST_PARAM = "gamma"


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class TaskSpec:
    num_classes: int = 4
    dim: int = 32
    samples_per_client: int = 200
    test_samples: int = 2000
    class_sep: float = 3.0


@dataclass(frozen=True)
class FLConfig:
    clients: int = 10
    global_epochs: int = 30
    local_epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 0.05
    lr_decay: float = 0.99
    alpha: float = 0.5
    mu: float = 0.1
    n: int = 256
    omega: int = 512
    seed: int = 0
    task: TaskSpec = field(default_factory=TaskSpec)
    mode: str = "fedsov"
    bits_per_client: int = 16
    sharding: str = "iid"
    curve: str = "bls12_381"
    workers: int = 1

    def __post_init__(self):
        if self.clients < 1:
            raise ValueError("need at least one client")
        for name in ("global_epochs", "batch_size", "n", "omega", "bits_per_client", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.local_epochs < 0 or self.learning_rate < 0 or self.alpha < 0 or self.mu <= 0:
            raise ValueError("local_epochs, learning_rate, alpha must be >= 0 and mu > 0")
        if self.mode not in ("fedsov", "fedipr"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.sharding != "iid":
            raise NotImplementedError("only IID sharding is implemented")

    @property
    def embedding_seed(self) -> int:
        return int(np.random.SeedSequence([self.seed, 0xE]).generate_state(1)[0])

    def replace(self, **changes) -> "FLConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "FLConfig":
        doc = dict(doc)
        doc["task"] = TaskSpec(**doc.get("task", {}))
        return cls(**doc)


def _rng(cfg_seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg_seed, *stream])


# ---------------------------------------------------------------------------
# Synthetic task
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.y.shape[0]


def class_means(task: TaskSpec, seed: int) -> np.ndarray:
    raw = _rng(seed, 1).standard_normal((task.num_classes, task.dim))
    return task.class_sep * raw / np.linalg.norm(raw, axis=1, keepdims=True)


def sample_task(task: TaskSpec, seed: int, count: int, stream: int) -> Dataset:
    """``count`` labelled points from unit-variance Gaussian clusters around fixed means."""
    means = class_means(task, seed)
    rng = _rng(seed, 2, stream)
    y = rng.integers(0, task.num_classes, size=count)
    x = means[y] + rng.standard_normal((count, task.dim))
    return Dataset(x, y)


def client_shards(cfg: FLConfig) -> list[Dataset]:
    pool = sample_task(cfg.task, cfg.seed, cfg.clients * cfg.task.samples_per_client, stream=0)
    order = _rng(cfg.seed, 3).permutation(len(pool))
    return [Dataset(pool.x[idx], pool.y[idx]) for idx in np.array_split(order, cfg.clients)]


def test_set(cfg: FLConfig) -> Dataset:
    return sample_task(cfg.task, cfg.seed, cfg.task.test_samples, stream=1)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ToyModel:
    params: dict[str, np.ndarray]

    @classmethod
    def init(cls, dim: int, omega: int, num_classes: int, rng: np.random.Generator) -> "ToyModel":
        return cls(
            {
                "W1": rng.standard_normal((dim, omega)) * np.sqrt(2.0 / dim),
                "b1": np.zeros(omega),
                "gamma": np.ones(omega),
                "beta": np.zeros(omega),
                "W2": rng.standard_normal((omega, num_classes)) * np.sqrt(1.0 / omega),
                "b2": np.zeros(num_classes),
            }
        )

    @property
    def host(self) -> np.ndarray:
        return self.params[HOST_PARAM]

    @property
    def omega(self) -> int:
        return self.params[HOST_PARAM].shape[0]

    def copy(self) -> "ToyModel":
        return ToyModel({k: v.copy() for k, v in self.params.items()})

    def logits(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        z = p["gamma"] * (x @ p["W1"] + p["b1"]) + p["beta"]
        return np.maximum(z, 0.0) @ p["W2"] + p["b2"]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def task_loss_and_grad(self, x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Mean softmax cross-entropy and its gradient."""
        p = self.params
        h = x @ p["W1"] + p["b1"]
        z = p["gamma"] * h + p["beta"]
        a = np.maximum(z, 0.0)
        logits = a @ p["W2"] + p["b2"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        m = y.shape[0]
        loss = -log_probs[np.arange(m), y].mean()

        d_logits = np.exp(log_probs)
        d_logits[np.arange(m), y] -= 1.0
        d_logits /= m
        d_a = d_logits @ p["W2"].T
        d_z = d_a * (z > 0)
        d_h = d_z * p["gamma"]
        grads = {
            "W2": a.T @ d_logits,
            "b2": d_logits.sum(axis=0),
            "gamma": (d_z * h).sum(axis=0),
            "beta": d_z.sum(axis=0),
            "W1": x.T @ d_h,
            "b1": d_h.sum(axis=0),
        }
        return float(loss), grads

    # serialization -------------------------------------------------------
    def to_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(self.params[k], dtype="<f8").tobytes() for k in PARAM_ORDER)

    def layout(self) -> dict:
        entries, offset = [], 0
        for k in PARAM_ORDER:
            arr = self.params[k]
            entries.append({"name": k, "shape": list(arr.shape), "offset": offset})
            offset += arr.size * 8
        return {"params": entries, "host": HOST_PARAM, "omega": self.omega, "dtype": "<f8"}

    @classmethod
    def from_bytes(cls, data: bytes, layout: dict) -> "ToyModel":
        params = {}
        for entry in layout["params"]:
            size = int(np.prod(entry["shape"]))
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=entry["offset"])
            params[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
        return cls(params)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, directory: str | Path, stem: str = "model") -> None:
        directory = Path(directory)
        (directory / f"{stem}.bin").write_bytes(self.to_bytes())
        (directory / f"{stem}.json").write_text(json.dumps(self.layout(), indent=2))

    @classmethod
    def load(cls, directory: str | Path, stem: str = "model") -> "ToyModel":
        directory = Path(directory)
        layout = json.loads((directory / f"{stem}.json").read_text())
        return cls.from_bytes((directory / f"{stem}.bin").read_bytes(), layout)


def accuracy(model: ToyModel, data: Dataset) -> float:
    return float(np.mean(model.predict(data.x) == data.y))


# ---------------------------------------------------------------------------
# Watermark objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WatermarkObjective:
    """One embedding target: matrix, watermark and hinge settings."""

    embedding: EmbeddingMatrix
    watermark: Watermark
    hinge: HingeConfig | None  # None disables the regulariser (alpha = 0)

    def loss(self, w: np.ndarray) -> float:
        cfg = self.hinge or HingeConfig()
        value = hinge_loss(w, self.embedding, self.watermark, cfg)
        return value if self.hinge else value / cfg.alpha

    def grad(self, w: np.ndarray) -> np.ndarray:
        if self.hinge is None:
            return np.zeros_like(w)
        return hinge_grad(w, self.embedding, self.watermark, self.hinge)

    def rate(self, w: np.ndarray) -> float:
        return detection_rate(self.watermark, extract(w, self.embedding))


def combined_loss(model: ToyModel, x: np.ndarray, y: np.ndarray, objective: WatermarkObjective | None) -> float:
    task, _ = model.task_loss_and_grad(x, y)
    if objective is None or objective.hinge is None:
        return task
    return task + objective.loss(model.host)


def combined_loss_and_grad(model, x, y, objective):
    loss, grads = model.task_loss_and_grad(x, y)
    if objective is not None and objective.hinge is not None:
        loss += objective.loss(model.host)
        grads[HOST_PARAM] = grads[HOST_PARAM] + objective.grad(model.host)
    return loss, grads


# ---------------------------------------------------------------------------
# Federation
# ---------------------------------------------------------------------------


@dataclass
class Client:
    index: int
    data: Dataset
    objective: WatermarkObjective
    keypair: ps.KeyPair | None = None


@dataclass
class Federation:
    cfg: FLConfig
    clients: list[Client]
    model: ToyModel
    test: Dataset
    group: ps.GroupParams | None = None
    pk_con: ConcatenatedKey | None = None
    watermark: Watermark | None = None
    embedding: EmbeddingMatrix | None = None


def _hinge_cfg(cfg: FLConfig) -> HingeConfig | None:
    return HingeConfig(alpha=cfg.alpha, mu=cfg.mu) if cfg.alpha > 0 else None


def setup_federation(cfg: FLConfig) -> Federation:
    shards = client_shards(cfg)
    model = ToyModel.init(cfg.task.dim, cfg.omega, cfg.task.num_classes, _rng(cfg.seed, 4))
    hinge = _hinge_cfg(cfg)
    if cfg.mode == "fedipr":
        clients = []
        for k, shard in enumerate(shards):
            wm = Watermark(_rng(cfg.seed, 6, k).integers(0, 2, size=cfg.bits_per_client, dtype=np.uint8))
            emb_seed = int(np.random.SeedSequence([cfg.seed, 0xE, k]).generate_state(1)[0])
            emb = gen_embedding_matrix(cfg.omega, cfg.bits_per_client, emb_seed)
            clients.append(Client(k, shard, WatermarkObjective(emb, wm, hinge)))
        return Federation(cfg, clients, model, test_set(cfg))

    group = ps.setup(cfg.curve, seed=cfg.seed)
    keys = [ps.keygen(group, _rng(cfg.seed, 5, k)) for k in range(cfg.clients)]
    pk_con = ConcatenatedKey(tuple(ps.encode_pk(kp.pk) for kp in keys))
    watermark = generate_watermark(pk_con, cfg.n)
    embedding = gen_embedding_matrix(cfg.omega, cfg.n, cfg.embedding_seed)
    objective = WatermarkObjective(embedding, watermark, hinge)
    clients = [Client(k, shard, objective, keys[k]) for k, shard in enumerate(shards)]
    return Federation(cfg, clients, model, test_set(cfg), group, pk_con, watermark, embedding)


def local_train(
    client: Client,
    global_model: ToyModel,
    cfg: FLConfig,
    lr: float,
    round_idx: int = 0,
) -> ToyModel:
    """``cfg.local_epochs`` of minibatch SGD on task loss + hinge over the client's shard."""
    model = global_model.copy()
    rng = _rng(cfg.seed, 7, round_idx, client.index)
    data = client.data
    for epoch in range(cfg.local_epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = combined_loss_and_grad(model, data.x[idx], data.y[idx], client.objective)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss {loss} at client {client.index}, round {round_idx}, "
                    f"epoch {epoch}, batch {start // cfg.batch_size}, lr {lr}"
                )
            for k in PARAM_ORDER:
                model.params[k] -= lr * grads[k]
    return model


def fedavg(updates: Sequence[ToyModel | dict], weights: Sequence[float]) -> ToyModel:
    """Sample-count weighted mean, accumulated in list (client-index) order."""
    if not updates:
        raise ValueError("need at least one update")
    if len(weights) != len(updates):
        raise ValueError("one weight per update required")
    dicts = [u.params if isinstance(u, ToyModel) else u for u in updates]
    keys = list(dicts[0])
    for d in dicts[1:]:
        if list(d) != keys or any(d[k].shape != dicts[0][k].shape for k in keys):
            raise ValueError("updates have inconsistent parameter shapes")
    total = float(sum(weights))
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    out = {}
    for k in keys:
        acc = np.zeros_like(dicts[0][k], dtype=np.float64)
        for d, wt in zip(dicts, weights):
            acc += (wt / total) * d[k]
        out[k] = acc
    return ToyModel(out)


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    main_acc: float
    detection_rate: float
    hinge_loss: float


def evaluate(fed: Federation, model: ToyModel) -> tuple[float, float, float]:
    """(accuracy, detection rate, hinge loss) of ``model``; fedipr averages over clients."""
    acc = accuracy(model, fed.test)
    objectives = [fed.clients[0].objective] if fed.cfg.mode == "fedsov" else [c.objective for c in fed.clients]
    rates = [o.rate(model.host) for o in objectives]
    losses = [o.loss(model.host) for o in objectives]
    return acc, float(np.mean(rates)), float(np.mean(losses))


def per_client_rates(fed: Federation, model: ToyModel) -> list[float]:
    return [c.objective.rate(model.host) for c in fed.clients]


@dataclass
class FederationResult:
    cfg: FLConfig
    metrics: list[RoundMetrics]
    model: ToyModel
    federation: Federation

    @property
    def final(self) -> RoundMetrics:
        return self.metrics[-1]


def run_federation(cfg: FLConfig, fed: Federation | None = None) -> FederationResult:
    fed = fed or setup_federation(cfg)
    model = fed.model
    weights = [len(c.data) for c in fed.clients]
    metrics = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for rnd in range(1, cfg.global_epochs + 1):
            lr = cfg.learning_rate * cfg.lr_decay ** (rnd - 1)

            def train(c, model=model, lr=lr, rnd=rnd):
                return local_train(c, model, cfg, lr, rnd)

            # map() yields in submission order, so aggregation order is fixed
            updates = list(pool.map(train, fed.clients)) if pool else [train(c) for c in fed.clients]
            model = fedavg(updates, weights)
            acc, rate, loss = evaluate(fed, model)
            metrics.append(RoundMetrics(rnd, acc, rate, loss))
            log.debug("round %d acc=%.4f rate=%.4f hinge=%.4g", rnd, acc, rate, loss)
    finally:
        if pool:
            pool.shutdown()
    return FederationResult(cfg, metrics, model, fed)


def baseline_fedipr_mode(cfg: FLConfig) -> FederationResult:
    return run_federation(cfg.replace(mode="fedipr"))


# ---------------------------------------------------------------------------
# Run directory
# ---------------------------------------------------------------------------


def write_metrics_csv(metrics: Sequence[RoundMetrics], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "main_acc", "detection_rate", "hinge_loss"])
        for m in metrics:
            w.writerow([m.round, repr(m.main_acc), repr(m.detection_rate), repr(m.hinge_loss)])


def read_metrics_csv(path: str | Path) -> list[RoundMetrics]:
    with open(path, newline="") as fh:
        return [
            RoundMetrics(int(r["round"]), float(r["main_acc"]), float(r["detection_rate"]), float(r["hinge_loss"]))
            for r in csv.DictReader(fh)
        ]


def save_run(result: FederationResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fed = result.federation
    (out / "config.json").write_text(json.dumps(result.cfg.to_json(), indent=2))
    write_metrics_csv(result.metrics, out / "metrics.csv")
    result.model.save(out)
    if fed.cfg.mode == "fedsov":
        keys = out / "keys"
        keys.mkdir(exist_ok=True)
        (keys / "group.json").write_text(json.dumps(fed.group.describe()))
        for c in fed.clients:
            ps.save_key(keys / f"client_{c.index:03d}.json", c.keypair, fed.group)
        fed.pk_con.save(keys / "pk_con.bin")
        fed.watermark.save(out / "watermark.json")
        fed.embedding.save(out / "embedding.json")
    else:
        (out / "watermark.json").write_text(
            json.dumps({"mode": "fedipr", "clients": [c.objective.watermark.to_json() for c in fed.clients]})
        )
        (out / "embedding.json").write_text(
            json.dumps({"mode": "fedipr", "clients": [c.objective.embedding.to_json() for c in fed.clients]})
        )
    return out


@dataclass
class RunArtifacts:
    cfg: FLConfig
    model: ToyModel
    watermark: Watermark
    embedding: EmbeddingMatrix
    group: ps.GroupParams
    pk_con: ConcatenatedKey
    keys: list[ps.KeyPair]


def load_run(run_dir: str | Path) -> RunArtifacts:
    run = Path(run_dir)
    cfg = FLConfig.from_json(json.loads((run / "config.json").read_text()))
    if cfg.mode != "fedsov":
        raise ValueError("only fedsov runs carry keys and a hash watermark")
    group = ps.params_from_description(json.loads((run / "keys" / "group.json").read_text()))
    key_files = sorted((run / "keys").glob("client_*.json"))
    return RunArtifacts(
        cfg=cfg,
        model=ToyModel.load(run),
        watermark=Watermark.load(run / "watermark.json"),
        embedding=EmbeddingMatrix.load(run / "embedding.json"),
        group=group,
        pk_con=ConcatenatedKey.load(run / "keys" / "pk_con.bin"),
        keys=[ps.load_key(f, group) for f in key_files],
    )
