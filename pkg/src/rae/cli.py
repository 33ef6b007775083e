"""Command line entry point: ``rae <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numeric abort (non-finite training, eigensolver failure).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import PCAModel, load_pca, pca_fit, pca_transform
from .data import (
    FORMATS,
    DataError,
    EmbeddingSet,
    SplitSpec,
    anisotropic_gaussian,
    load_embeddings,
    save_embeddings,
    train_test_split,
    _atomic_write,
)
from .linalg import ConvergenceError, LinAlgError
from .metrics import METRICS, MetricError, preservation_sweep
from .model import MAGIC as RAE_MAGIC, ModelError, RAEModel, encode, load_model, save_model
from .optim import TrainConfig, TrainingAborted, train
from .spectral import spectrum_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_SWEEP = "1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1e0"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return values


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _metric_list(text: str) -> list[str]:
    values = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in values if v not in METRICS]
    if bad or not values:
        raise argparse.ArgumentTypeError(f"metric must be one of {METRICS}, got {text!r}")
    return values


def _add_input(p, required=True):
    p.add_argument("--input", required=required, help="embedding file")
    p.add_argument("--format", choices=FORMATS, help="input format (default: from suffix)")


def _add_training(p):
    p.add_argument("--m", type=int, required=True, help="latent dimension")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="weight decay / regularization")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr-max", type=float, default=1e-3)
    p.add_argument("--lr-min", type=float, default=1e-5)
    p.add_argument("--reg-mode", choices=("decoupled", "in-loss"), default="decoupled")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=float, default=0.9, help="train fraction")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rae", description="Regularized auto-encoder for k-NN preserving reduction")
    parser.add_argument("--version", action="version", version=f"rae {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train an RAE on the train split")
    _add_input(p)
    _add_training(p)
    p.add_argument("--out", default="model.rae")

    p = sub.add_parser("eval", help="k-NN preservation on the test split")
    _add_input(p)
    p.add_argument("--model", required=True, help="model file, 'pca' or 'identity'")
    p.add_argument("--m", type=int, help="latent dimension for --model pca")
    p.add_argument("--k", type=_int_list, default=[5])
    p.add_argument("--metric", type=_metric_list, default=["euclidean"])
    p.add_argument("--split", type=float, help="train fraction (default: from model, else 0.9)")
    p.add_argument("--seed", type=int, help="split seed (default: from model, else 0)")
    p.add_argument("--out", help="JSON output (default: stdout)")

    p = sub.add_parser("spectrum", help="singular spectrum of a model's encoder")
    p.add_argument("--model", required=True)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="train/eval/spectrum over a lambda grid")
    _add_input(p)
    _add_training(p)
    p.add_argument("--lambdas", type=_float_list, default=_float_list(DEFAULT_SWEEP))
    p.add_argument("--k", type=_int_list, default=[1, 5, 10])
    p.add_argument("--metric", type=_metric_list, default=["euclidean"])
    p.add_argument("--out", default="sweep.csv")

    p = sub.add_parser("bench", help="training and transform timings")
    _add_input(p, required=False)
    p.add_argument("--synthetic", help="N,n: use a synthetic anisotropic corpus instead of --input")
    _add_training(p)
    p.add_argument("--latency-batch", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--out")

    p = sub.add_parser("convert", help="convert between embedding formats")
    _add_input(p)
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=FORMATS)

    p = sub.add_parser("synth", help="write a synthetic anisotropic Gaussian corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--decay", type=float, default=0.9)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--out-format", choices=FORMATS)
    return parser


# -- helpers ---------------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config(args, lam=None) -> TrainConfig:
    return TrainConfig(
        latent_dim=args.m,
        lam=args.lam if lam is None else lam,
        steps=args.steps,
        batch_size=args.batch,
        lr_max=args.lr_max,
        lr_min=args.lr_min,
        seed=args.seed,
        reg_mode=args.reg_mode.replace("-", "_"),
    )


def _write_text(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        _atomic_write(Path(path), text.encode())


def _manifest(args, inputs, timings, outputs) -> dict:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "tool": "rae",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "command": args.command,
        "config": resolved,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(o) for o in outputs],
        "timings_seconds": timings,
    }


def _write_manifest(path, manifest: dict) -> None:
    _atomic_write(Path(path), (json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n").encode())


def _split(data: EmbeddingSet, fraction: float, seed: int):
    return train_test_split(data, SplitSpec(fraction, seed))


def _train_one(train_set: EmbeddingSet, config: TrainConfig, extra: dict):
    t0 = time.perf_counter()
    model, history = train(train_set, config)
    seconds = time.perf_counter() - t0
    model = RAEModel(model.encoder, model.decoder, {**model.provenance, **extra})
    return model, history, seconds


def _sniff_model(path):
    with open(path, "rb") as fh:
        head = fh.read(len(RAE_MAGIC))
    return load_model(path) if head == RAE_MAGIC else load_pca(path)


def _reduce(reducer, data: EmbeddingSet) -> EmbeddingSet:
    if reducer is None:
        return data
    if isinstance(reducer, PCAModel):
        return pca_transform(reducer, data)
    if data.dim != reducer.input_dim:
        raise ModelError(f"model expects {reducer.input_dim}-d input, data is {data.dim}-d")
    return EmbeddingSet(encode(reducer, data.vectors), f"rae({data.source})")


def _reports(original, reduced, ks, metrics) -> list[dict]:
    out = []
    for metric in metrics:
        for k, report in preservation_sweep(original, reduced, ks, metric).items():
            out.append(report.to_dict())
    return out


# -- commands --------------------------------------------------------------


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    data = load_embeddings(args.input, args.format)
    config = _config(args)
    if config.latent_dim >= data.dim:
        raise DataError(f"--m {config.latent_dim} must be smaller than input dim {data.dim}")
    train_set, _ = _split(data, args.split, args.seed)
    extra = {"split": args.split, "input_sha256": _sha256(args.input)}
    model, history, seconds = _train_one(train_set, config, extra)
    out = Path(args.out)
    save_model(model, out)
    history_path = out.with_name(out.name + ".history.csv")
    _atomic_write(history_path, history.to_csv().encode())
    timings = {"train": seconds, "total": time.perf_counter() - t0}
    _write_manifest(
        out.with_name(out.name + ".run.json"),
        _manifest(args, [args.input], timings, [out, history_path]),
    )
    print(f"trained {data.dim}->{config.latent_dim} on {train_set.count} vectors in {seconds:.2f}s; "
          f"final loss {history.total[-1]:.6g}; wrote {out}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    data = load_embeddings(args.input, args.format)
    inputs = [args.input]
    provenance = {}
    if args.model == "pca":
        if args.m is None:
            raise UsageError("--model pca needs --m")
        reducer_name = "pca"
    elif args.model == "identity":
        reducer_name = "identity"
    else:
        reducer = _sniff_model(args.model)
        inputs.append(args.model)
        reducer_name = "rae" if isinstance(reducer, RAEModel) else "pca-file"
        provenance = getattr(reducer, "provenance", None) or {}
    fraction = args.split if args.split is not None else provenance.get("split", 0.9)
    seed = args.seed if args.seed is not None else provenance.get("seed", 0)
    train_set, test_set = _split(data, fraction, seed)

    if reducer_name == "pca":
        reducer = pca_fit(train_set, args.m)
    elif reducer_name == "identity":
        reducer = None
    reduced = _reduce(reducer, test_set)
    result = {
        "reducer": reducer_name,
        "n": data.dim,
        "m": reduced.dim,
        "train_count": train_set.count,
        "test_count": test_set.count,
        "split": fraction,
        "seed": seed,
        "reports": _reports(test_set, reduced, args.k, args.metric),
    }
    _write_text(args.out, json.dumps(result, indent=2) + "\n")
    if args.out:
        _write_manifest(
            args.out + ".run.json",
            _manifest(args, inputs, {"total": time.perf_counter() - t0}, [args.out]),
        )
    return EXIT_OK


def cmd_spectrum(args) -> int:
    reducer = _sniff_model(args.model)
    w = reducer.encoder if isinstance(reducer, RAEModel) else reducer.components
    _write_text(args.out, json.dumps(spectrum_report(w).to_dict(), indent=2) + "\n")
    return EXIT_OK


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return repr(float(x))


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    data = load_embeddings(args.input, args.format)
    if args.m >= data.dim:
        raise DataError(f"--m {args.m} must be smaller than input dim {data.dim}")
    train_set, test_set = _split(data, args.split, args.seed)
    ks = sorted(set(args.k))
    metrics = args.metric
    acc_cols = [f"acc_{metric}_k{k}" for metric in metrics for k in ks]
    header = ["lambda", "status", *acc_cols, "sigma_max", "sigma_min", "condition_number", "train_seconds"]
    rows = []
    timings = {}
    for lam in args.lambdas:
        row = {"lambda": repr(float(lam))}
        try:
            model, _, seconds = _train_one(train_set, _config(args, lam), {})
            reduced = _reduce(model, test_set)
            for metric in metrics:
                for k, rep in preservation_sweep(test_set, reduced, ks, metric).items():
                    row[f"acc_{metric}_k{k}"] = _fmt(rep.overall)
            spec = spectrum_report(model.encoder)
            row.update(
                status="ok",
                sigma_max=_fmt(spec.sigma_max),
                sigma_min=_fmt(spec.sigma_min),
                condition_number=_fmt(spec.condition_number),
                train_seconds=f"{seconds:.3f}",
            )
            timings[repr(float(lam))] = seconds
        except (TrainingAborted, ConvergenceError, ValueError) as exc:
            row["status"] = f"error: {exc}".replace("\n", " ")
        rows.append(row)
        print(f"lambda={lam:g} {row['status']}", file=sys.stderr)

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, restval="", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _write_text(args.out, buf.getvalue())
    timings["total"] = time.perf_counter() - t0
    if args.out:
        _write_manifest(args.out + ".run.json", _manifest(args, [args.input], timings, [args.out]))
    return EXIT_OK


def _median_seconds(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cmd_bench(args) -> int:
    if args.synthetic:
        try:
            count, dim = (int(v) for v in args.synthetic.split(","))
        except ValueError:
            raise UsageError("--synthetic expects N,n")
        data = anisotropic_gaussian(count, dim, seed=args.seed)
        inputs = []
    elif args.input:
        data = load_embeddings(args.input, args.format)
        inputs = [args.input]
    else:
        raise UsageError("bench needs --input or --synthetic")
    if args.m >= data.dim:
        raise DataError(f"--m {args.m} must be smaller than input dim {data.dim}")
    train_set, test_set = _split(data, args.split, args.seed)

    model, history, train_seconds = _train_one(train_set, _config(args), {})
    t0 = time.perf_counter()
    pca = pca_fit(train_set, args.m)
    pca_seconds = time.perf_counter() - t0

    rows = min(args.latency_batch, data.count)
    batch = data.vectors[:rows]
    rae_batch = _median_seconds(lambda: encode(model, batch), args.repeats)
    pca_batch = _median_seconds(lambda: (batch - pca.mean) @ pca.components.T, args.repeats)
    result = {
        "n": data.dim,
        "m": args.m,
        "train_count": train_set.count,
        "steps": args.steps,
        "batch_size": args.batch,
        "rae_train_seconds": train_seconds,
        "pca_fit_seconds": pca_seconds,
        "latency_batch_rows": rows,
        "rae_transform_batch_ms": rae_batch * 1e3,
        "rae_transform_per_vector_ms": rae_batch * 1e3 / rows,
        "pca_transform_batch_ms": pca_batch * 1e3,
        "pca_transform_per_vector_ms": pca_batch * 1e3 / rows,
        "results": {
            "final_loss": history.total[-1],
            "encoder_sha256": hashlib.sha256(model.encoder.tobytes()).hexdigest(),
        },
    }
    _write_text(args.out, json.dumps(result, indent=2) + "\n")
    if args.out:
        _write_manifest(args.out + ".run.json", _manifest(args, inputs, {"train": train_seconds}, [args.out]))
    return EXIT_OK


def cmd_convert(args) -> int:
    data = load_embeddings(args.input, args.format)
    save_embeddings(data, args.out, args.out_format)
    return EXIT_OK


def cmd_synth(args) -> int:
    data = anisotropic_gaussian(args.count, args.dim, args.decay, args.scale, args.seed)
    save_embeddings(data, args.out, args.out_format)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "convert": cmd_convert,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rae {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingAborted, ConvergenceError) as exc:
        print(f"rae {args.command}: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ModelError, MetricError, LinAlgError, ValueError, OSError) as exc:
        print(f"rae {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
