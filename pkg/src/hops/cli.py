"""Command-line surface.

Subcommands: synth, corrupt, knn, ot-solve, train, eval, report.
Exit codes: 0 success, 2 usage error, 3 I/O error, 4 runtime failure.
HOPS_THREADS (default 1) opts into parallel local selection during training.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .corruption import CorruptionConfig, corrupt_bundle, realized_confusion_rate
from .data import cosine_affinity, synth_gaussian_mixture
from .errors import FormatError, HopsError
from .hopsfile import load_bundle, save_bundle
from .local_filter import LdfConfig, topk_neighbors
from .prompt import PromptParams
from .train import TrainConfig, evaluate, train
from .transport import (
    CostMatrix,
    Marginals,
    SinkhornConfig,
    entropic_objective,
    gibbs_kernel,
    sinkhorn,
)

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_RUNTIME = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hops",
        description="Partial-label learning over frozen embeddings: "
        "local neighbor consensus plus global optimal-transport selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a Gaussian-mixture dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("corrupt", help="attach candidate label sets")
    p.add_argument("input")
    p.add_argument("--kind", choices=("rand", "insd"), required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--tail", choices=("exp", "two_level"))
    p.add_argument("--tail-ratio", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("knn", help="dump the neighbor index as JSON")
    p.add_argument("input")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")

    p = sub.add_parser("ot-solve", help="solve one masked transport instance")
    p.add_argument("input", help="JSON with r, c, cost, mask, epsilon, iterations")
    p.add_argument("--out")

    p = sub.add_parser("train", help="train the prompt head")
    p.add_argument("--train", dest="train_path", required=True)
    p.add_argument("--test", dest="test_path", required=True)
    p.add_argument(
        "--method", choices=("hops", "baseline", "ldf_only", "gop_only"), default="hops"
    )
    p.add_argument("--loss", help="baseline loss name (rc|cc|exp|gce|lwc|mae|mse|sce)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--warmup-lr", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--tau", type=float, default=0.4)
    p.add_argument("--voting", choices=("hard", "soft"), default="hard")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--prompt-mode", choices=("uni", "cls"), default="uni")
    p.add_argument("--logit-scale", type=float, default=1.0)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("eval", help="evaluate saved parameters on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--params", required=True)

    p = sub.add_parser("report", help="render summaries as a markdown table")
    p.add_argument("summaries", nargs="+")
    p.add_argument("--out")

    return parser


def _emit(text: str, out_path):
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_synth(args) -> int:
    bundle = synth_gaussian_mixture(
        num_classes=args.classes,
        dim=args.dim,
        per_class=args.per_class,
        separation=args.separation,
        noise=args.noise,
        seed=args.seed,
    )
    save_bundle(bundle, args.out)
    print(f"n={bundle.n} d={bundle.d} C={bundle.num_classes}")
    return 0


def _cmd_corrupt(args) -> int:
    bundle = load_bundle(args.input)
    cfg = CorruptionConfig(
        kind=args.kind,
        L=args.L,
        seed=args.seed,
        missing_rate=args.missing_rate,
        tail_pattern=args.tail,
        tail_ratio=args.tail_ratio,
    )
    out = corrupt_bundle(bundle, cfg)
    save_bundle(out, args.out)
    print(f"gamma_c={realized_confusion_rate(out.candidates):.2f}")
    return 0


def _cmd_knn(args) -> int:
    bundle = load_bundle(args.input)
    nbrs = topk_neighbors(cosine_affinity(bundle.embeddings), args.k)
    payload = {"k": nbrs.k, "neighbors": nbrs.idx.tolist()}
    _emit(json.dumps(payload) + "\n", args.out)
    return 0


def _cmd_ot_solve(args) -> int:
    instance = json.loads(Path(args.input).read_text())
    mask = np.asarray(instance["mask"], dtype=bool)
    cost = CostMatrix(
        values=np.where(mask, 0.0, np.asarray(instance["cost"])), mask=mask
    )
    marginals = Marginals(r=np.asarray(instance["r"]), c=np.asarray(instance["c"]))
    epsilon = float(instance["epsilon"])
    cfg = SinkhornConfig(epsilon=epsilon, iterations=int(instance["iterations"]))
    plan = sinkhorn(gibbs_kernel(cost, epsilon), marginals, cfg)
    payload = {
        "plan": plan.plan.tolist(),
        "residual_r": plan.residual_r,
        "residual_c": plan.residual_c,
        "objective": entropic_objective(plan, cost, epsilon),
    }
    _emit(json.dumps(payload) + "\n", args.out)
    return 0


def _cmd_train(args) -> int:
    train_bundle = load_bundle(args.train_path)
    test_bundle = load_bundle(args.test_path)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        warmup_lr=args.warmup_lr,
        seed=args.seed,
        method=args.method,
        loss_name=args.loss,
        lam=args.lam,
        momentum=args.momentum,
        prompt_mode=args.prompt_mode,
        logit_scale=args.logit_scale,
        ldf=LdfConfig(k=args.k, tau=args.tau, voting=args.voting),
        sinkhorn=SinkhornConfig(epsilon=args.epsilon, iterations=args.iterations),
    )
    try:
        params, log = train(train_bundle, test_bundle, cfg)
    except HopsError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(log.to_csv())
    (out_dir / "params.json").write_text(json.dumps(params.to_json_dict()) + "\n")
    final = log.final
    summary = {
        "method": args.method if args.method != "baseline" else f"baseline:{args.loss}",
        "seed": args.seed,
        "gamma_c": (
            None
            if train_bundle.candidates is None
            else round(realized_confusion_rate(train_bundle.candidates), 4)
        ),
        "epochs": args.epochs,
        "final_test_acc": final.test_acc,
        "best_test_acc": log.best_test_acc,
        "final_acc_local": final.acc_local,
        "final_acc_global": final.acc_global,
        "final_acc_joint": final.acc_joint,
        "config": {
            "batch_size": args.batch_size,
            "lr": args.lr,
            "lambda": args.lam,
            "k": args.k,
            "tau": args.tau,
            "epsilon": args.epsilon,
            "iterations": args.iterations,
            "prompt_mode": args.prompt_mode,
            "logit_scale": args.logit_scale,
        },
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"final_test_acc={final.test_acc:.4f}")
    return 0


def _cmd_eval(args) -> int:
    bundle = load_bundle(args.data)
    if bundle.class_anchors is None:
        print("dataset has no class anchors", file=sys.stderr)
        return EXIT_RUNTIME
    params = PromptParams.from_json_dict(
        json.loads(Path(args.params).read_text()),
        bundle.class_anchors.astype(np.float64),
    )
    print(f"accuracy={evaluate(params, bundle):.4f}")
    return 0


def _cmd_report(args) -> int:
    groups = defaultdict(list)
    for path in args.summaries:
        try:
            summary = json.loads(Path(path).read_text())
            key = (summary["gamma_c"], summary["method"])
            groups[key].append(float(summary["final_test_acc"]))
        except (KeyError, ValueError, TypeError) as exc:
            print(f"malformed summary {path}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    lines = [
        "| gamma_c | method | test acc (mean +/- std) | runs |",
        "|---------|--------|-------------------------|------|",
    ]
    for (gamma, method), accs in sorted(
        groups.items(), key=lambda kv: (kv[0][0] if kv[0][0] is not None else -1, kv[0][1])
    ):
        arr = np.asarray(accs)
        gtxt = "-" if gamma is None else f"{gamma:.2f}"
        lines.append(
            f"| {gtxt} | {method} | {arr.mean():.4f} +/- {arr.std():.4f} | {len(accs)} |"
        )
    _emit("\n".join(lines) + "\n", args.out)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "corrupt": _cmd_corrupt,
    "knn": _cmd_knn,
    "ot-solve": _cmd_ot_solve,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (FormatError, OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HopsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
