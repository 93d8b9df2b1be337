"""Command line interface.

Exit codes: 0 success, 2 verification rejected, 1 any error (stderr carries a JSON object).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import attacks
from . import pairing_sig as ps
from .embedding import EmbeddingMatrix, HingeConfig, embed_standalone, extract, gen_embedding_matrix, save_host
from .fl_sim import FLConfig, TaskSpec, ToyModel, load_run, read_metrics_csv, run_federation, save_run, test_set
from .hash_watermark import ConcatenatedKey, Watermark, detection_rate, generate_watermark
from .protocol import (
    OWNER_VERIFIED,
    HonestClient,
    ReplayAdversary,
    SystemPublicParams,
    Verifier,
    read_transcript,
    recheck_transcript,
    verify_ownership,
)
from .security_boundary import solve_boundary

EXIT_OK, EXIT_ERROR, EXIT_REJECT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(args, rows: list[dict] | dict) -> None:
    if args.format == "csv":
        rows = rows if isinstance(rows, list) else [rows]
        flat = [{k: (json.dumps(v) if isinstance(v, (dict, list)) else v) for k, v in r.items()} for r in rows]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(flat[0]))
        w.writeheader()
        w.writerows(flat)
        sys.stdout.write(buf.getvalue())
    else:
        print(json.dumps(rows, indent=2, default=str))


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_setup(args) -> int:
    group = ps.setup(args.curve, seed=args.seed)
    emb_seed = args.embedding_seed if args.embedding_seed is not None else args.seed
    pp = SystemPublicParams.create(args.n, args.omega, emb_seed, group, args.pa_log2)
    pp.save(_out(args) / "pp.json")
    _emit(args, pp.to_json())
    return EXIT_OK


def cmd_keygen(args) -> int:
    group = ps.setup(args.curve, seed=args.seed)
    keys_dir = _out(args) / "keys"
    keys_dir.mkdir(exist_ok=True)
    (keys_dir / "group.json").write_text(json.dumps(group.describe()))
    pks = []
    for i in range(args.count):
        kp = ps.keygen(group, np.random.default_rng([args.seed, 5, i]))
        ps.save_key(keys_dir / f"client_{i:03d}.json", kp, group)
        pks.append(ps.encode_pk(kp.pk))
    con = ConcatenatedKey(tuple(pks))
    con.save(keys_dir / "pk_con.bin")
    _emit(args, {"count": con.K, "pk_len_bytes": con.pk_len, "pk_con": str(keys_dir / "pk_con.bin")})
    return EXIT_OK


def cmd_wmgen(args) -> int:
    con = ConcatenatedKey.load(args.pk_con)
    wm = generate_watermark(con, args.n)
    wm.save(_out(args) / "watermark.json")
    _emit(args, wm.to_json())
    return EXIT_OK


def _fl_config(args) -> FLConfig:
    task = TaskSpec(samples_per_client=args.samples_per_client)
    return FLConfig(
        clients=args.clients,
        global_epochs=args.global_epochs,
        local_epochs=args.local_epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        lr_decay=args.lr_decay,
        alpha=args.alpha,
        mu=args.mu,
        n=args.wm_bits,
        omega=args.omega,
        seed=args.seed,
        task=task,
        mode=args.mode,
        bits_per_client=args.bits_per_client,
        curve=args.curve,
        workers=args.workers,
    )


def cmd_simulate(args) -> int:
    cfg = _fl_config(args)
    result = run_federation(cfg)
    out = save_run(result, _out(args))
    if cfg.mode == "fedsov":
        fed = result.federation
        SystemPublicParams.create(cfg.n, cfg.omega, cfg.embedding_seed, fed.group, args.pa_log2).save(out / "pp.json")
    f = result.final
    _emit(args, {"round": f.round, "main_acc": f.main_acc, "detection_rate": f.detection_rate, "hinge_loss": f.hinge_loss, "run_dir": str(out)})
    return EXIT_OK


def cmd_embed(args) -> int:
    wm = Watermark.load(args.watermark)
    emb = gen_embedding_matrix(args.omega, wm.n, args.embedding_seed if args.embedding_seed is not None else args.seed)
    w0 = np.random.default_rng(args.seed).normal(0.0, args.init_scale, size=args.omega)
    res = embed_standalone(w0, emb, wm, HingeConfig(args.alpha, args.mu), args.step_size, args.steps)
    out = _out(args)
    save_host(out / "host.bin", res.w)
    emb.save(out / "embedding.json")
    _emit(args, {"loss": res.loss, "rate": res.rate, "steps": res.steps, "converged": res.converged})
    return EXIT_OK


def cmd_extract(args) -> int:
    model = ToyModel.load(args.model_dir)
    emb = EmbeddingMatrix.load(args.embedding)
    h_prime = extract(model.host, emb)
    row = {"n": h_prime.n, "bits_hex": h_prime.to_bytes().hex()}
    if args.watermark:
        row["detection_rate"] = detection_rate(Watermark.load(args.watermark), h_prime)
    _emit(args, row)
    return EXIT_OK


def cmd_boundary(args) -> int:
    rows = [solve_boundary(n, args.pa_log2).as_row() for n in args.n]
    _emit(args, rows if len(rows) > 1 or args.format == "csv" else rows[0])
    return EXIT_OK


def cmd_attack(args) -> int:
    out = _out(args)
    if args.kind == "game":
        res = attacks.near_collision_forging_game(args.game_n, args.game_err, args.game_k, np.random.default_rng(args.seed), args.repetitions)
        _emit(args, {"n": res.n, "err": res.err, "k": res.k, "repetitions": res.repetitions, "success_rate": res.success_rate, "bound": res.bound, "exact": res.exact})
        return EXIT_OK

    run = load_run(args.run_dir)
    test = test_set(run.cfg)
    if args.kind == "ambiguity":
        pp = SystemPublicParams.load(Path(args.run_dir) / "pp.json")
        adversary = ReplayAdversary([], run.group)

        def fedsov_check():
            return verify_ownership(run.model, run.pk_con, 0, adversary, pp, Verifier(np.random.default_rng(args.seed))).verdict

        rep = attacks.ambiguity_attack_demo(run.model, test, run.cfg.n, np.random.default_rng(args.seed), fedsov_check=fedsov_check)
        (out / "attack_ambiguity.json").write_text(json.dumps(rep.to_json(), indent=2))
        _emit(args, rep.to_json())
        return EXIT_OK

    target = attacks.AttackTarget(test, run.embedding, run.watermark)
    kind = {"gaussian": "gaussian_target"}.get(args.kind, args.kind)
    values = args.sweep or [None]
    rows, last = [], None
    for v in values:
        cfg = attacks.RemovalAttackConfig(
            kind,
            epochs=int(v) if (v is not None and kind == "finetune") else args.epochs,
            prune_rate=v if (v is not None and kind == "prune") else args.prune_rate,
            phi=v if (v is not None and kind == "gaussian_target") else args.phi,
            seed=args.seed,
            learning_rate=args.lr,
        )
        data = attacks.attacker_dataset(run.cfg) if kind == "finetune" else None
        last = attacks.run_removal_attack(run.model, target, cfg, data)
        rows.append({"param": v, "acc_before": last.before["acc"], "rate_before": last.before["rate"], "acc_after": last.after["acc"], "rate_after": last.after["rate"]})
    last.save(out / f"attack_{args.kind}.json")
    if args.sweep:
        attacks.write_sweep_csv(rows, out / f"sweep_{args.kind}.csv")
    if args.save_model:
        last.model.save(out)
    _emit(args, rows if args.sweep else last.to_report())
    return EXIT_OK


def cmd_verify(args) -> int:
    run_dir = Path(args.run_dir)
    pp = SystemPublicParams.load(run_dir / "pp.json")
    run = load_run(run_dir)
    model = ToyModel.load(args.model_dir) if args.model_dir else run.model
    if args.signer == "honest":
        signer = HonestClient(run.keys[args.client], run.group, np.random.default_rng([args.seed, 9]))
    else:
        observed = []
        if args.transcripts and Path(args.transcripts).exists():
            observed = [read_transcript(p).record() for p in sorted(Path(args.transcripts).glob("*/transcript.jsonl"))]
        signer = ReplayAdversary(observed, run.group)
    t = verify_ownership(model, run.pk_con, args.client, signer, pp, Verifier(), session_dir=args.transcripts or _out(args) / "transcripts")
    _emit(args, t.record())
    return EXIT_OK if t.verdict == OWNER_VERIFIED else EXIT_REJECT


def cmd_report(args) -> int:
    rows = []
    if args.run_dir:
        run_dir = Path(args.run_dir)
        metrics = read_metrics_csv(run_dir / "metrics.csv")
        cfg = json.loads((run_dir / "config.json").read_text())
        f = metrics[-1]
        rows.append({"kind": "run", "mode": cfg["mode"], "clients": cfg["clients"], "n": cfg["n"], "rounds": len(metrics), "main_acc": f.main_acc, "detection_rate": f.detection_rate})
    if args.transcripts:
        pp = SystemPublicParams.load(Path(args.run_dir) / "pp.json") if args.run_dir else None
        con = ConcatenatedKey.load(Path(args.run_dir) / "keys" / "pk_con.bin") if args.run_dir else None
        for path in sorted(Path(args.transcripts).glob("*/transcript.jsonl")):
            t = read_transcript(path)
            row = {"kind": "transcript", "session_id": t.session_id, "pk_index": t.pk_index, "distance": t.distance, "verdict": t.verdict}
            if pp is not None:
                row["recheck_matches"] = recheck_transcript(t, con, pp).to_json() == t.to_json()
            rows.append(row)
    if not rows:
        raise UsageError("report needs --run-dir and/or --transcripts")
    _emit(args, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = _Parser(prog="fedsov", description="Federated model ownership verification toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("setup", parents=[common], help="write system public parameters")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--omega", type=int, default=512)
    p.add_argument("--curve", choices=ps.CURVES, default="bls12_381")
    p.add_argument("--pa-log2", type=float, default=-128.0)
    p.add_argument("--embedding-seed", type=int)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("keygen", parents=[common], help="generate client key pairs and pk_con")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--curve", choices=ps.CURVES, default="bls12_381")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("wmgen", parents=[common], help="hash watermark from pk_con")
    p.add_argument("--pk-con", required=True)
    p.add_argument("--n", type=int, default=256)
    p.set_defaults(func=cmd_wmgen)

    p = sub.add_parser("simulate", parents=[common], help="run a federation")
    p.add_argument("--clients", type=int, default=10)
    p.add_argument("--wm-bits", type=int, default=256)
    p.add_argument("--omega", type=int, default=512)
    p.add_argument("--global-epochs", type=int, default=30)
    p.add_argument("--local-epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--lr-decay", type=float, default=0.99)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--mode", choices=("fedsov", "fedipr"), default="fedsov")
    p.add_argument("--bits-per-client", type=int, default=16)
    p.add_argument("--samples-per-client", type=int, default=200)
    p.add_argument("--curve", choices=ps.CURVES, default="bls12_381")
    p.add_argument("--pa-log2", type=float, default=-128.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("embed", parents=[common], help="standalone hinge embedding into a random host vector")
    p.add_argument("--watermark", required=True)
    p.add_argument("--omega", type=int, default=512)
    p.add_argument("--embedding-seed", type=int)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", parents=[common], help="read the watermark out of a model")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--watermark")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("boundary", parents=[common], help="security boundary err(n), r(n)")
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--pa-log2", type=float, default=-128.0)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("attack", parents=[common], help="run an attack against a run directory")
    p.add_argument("--kind", choices=("finetune", "prune", "gaussian", "ambiguity", "game"), required=True)
    p.add_argument("--run-dir")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--prune-rate", type=float, default=0.6)
    p.add_argument("--phi", type=float, default=0.5)
    p.add_argument("--sweep", type=float, nargs="+")
    p.add_argument("--save-model", action="store_true")
    p.add_argument("--game-n", type=int, default=16)
    p.add_argument("--game-err", type=int, default=1)
    p.add_argument("--game-k", type=int, default=100)
    p.add_argument("--repetitions", type=int, default=10_000)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("verify", parents=[common], help="ownership verification session")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--model-dir", help="suspect model (defaults to the run's global model)")
    p.add_argument("--client", type=int, default=0)
    p.add_argument("--signer", choices=("honest", "replay"), default="honest")
    p.add_argument("--transcripts")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", parents=[common], help="summarise a run and its transcripts")
    p.add_argument("--run-dir")
    p.add_argument("--transcripts")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "attack" and args.kind not in ("game",) and not args.run_dir:
            raise UsageError("--run-dir is required for this attack")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(json.dumps({"error": "usage", "message": str(exc)}) + "\n")
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 1
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
