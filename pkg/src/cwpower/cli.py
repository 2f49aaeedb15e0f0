"""Command-line workflow: generate, train, evaluate, estimate, sweep, audit.

Every run writes a manifest (resolved options, seeds, artifact checksums) to
the output directory. Exit codes: 0 success, 1 usage error, 2 data/format
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

from . import autograd as ag
from . import dataset, evaluation, models, signals, spectral, training

OUTPUT_DIR_ENV = "CWPOWER_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_config_file(path) -> dict:
    """Flat key=value file; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


class _Options:
    """Resolves option values with precedence CLI > config file > default."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self._args = args
        self._config = config
        self.resolved: dict = {}

    def get(self, key: str, default, cast=None):
        value = getattr(self._args, key, None)
        if value is None:
            raw = self._config.get(key)
            if raw is None:
                value = default
            elif cast is bool:
                value = raw.lower() in ("1", "true", "yes", "on")
            else:
                value = (cast or str)(raw)
        self.resolved[key] = value
        return value


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, resolved: dict, artifacts: dict) -> Path:
    manifest = {
        "command": command,
        "resolved": {k: v for k, v in sorted(resolved.items())},
        "artifacts": {
            name: {"path": str(path), "sha256": _sha256(Path(path))}
            for name, path in sorted(artifacts.items())
        },
        # Timestamp lives in its own key so artifact comparisons can drop it.
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = out_dir / f"{command}_manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _output_dir(opts: _Options) -> Path:
    out = opts.get("output_dir", os.environ.get(OUTPUT_DIR_ENV, "out"))
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _generate_split_save(opts: _Options, out_dir: Path, corpus_path: Path) -> dataset.Corpus:
    per_cell = opts.get("per_cell", 50, int)
    master_seed = opts.get("master_seed", 0, int)
    test_per_cell = opts.get("test_per_cell", 30, int)
    val_fraction = opts.get("val_fraction", 0.15, float)
    split_seed = opts.get("split_seed", master_seed, int)
    corpus = dataset.generate_corpus(signals.RfConfig(), signals.PowerGrid(), per_cell, master_seed)
    if per_cell > test_per_cell:
        corpus = dataset.split_corpus(corpus, val_fraction, test_per_cell, split_seed)
    else:
        print(
            f"note: per_cell={per_cell} <= test_per_cell={test_per_cell}; "
            "corpus saved without split assignments",
            file=sys.stderr,
        )
    dataset.save_corpus(corpus, corpus_path)
    return corpus


def cmd_generate(opts: _Options) -> int:
    out_dir = _output_dir(opts)
    corpus_path = Path(opts.get("out", str(out_dir / "corpus.cwpl")))
    _generate_split_save(opts, out_dir, corpus_path)
    _write_manifest(out_dir, "generate", opts.resolved, {"corpus": corpus_path})
    print(f"wrote {corpus_path}")
    return EXIT_OK


def _train_one(corpus: dataset.Corpus, variant: str, epochs: int, batch_size: int, lr: float, seed: int):
    spec = models.ModelSpec.for_variant(variant)
    cfg = training.TrainConfig(
        epochs=epochs, batch_size=batch_size, lr=lr, seed=seed, variant=variant
    )
    return training.train(corpus, spec, cfg)


def _write_loss_csv(history: training.TrainHistory, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss_db2,val_loss_db2\n")
        for epoch, (t, v) in enumerate(zip(history.train_loss, history.val_loss), start=1):
            fh.write(f"{epoch},{t!r},{v!r}\n")


def cmd_train(opts: _Options) -> int:
    out_dir = _output_dir(opts)
    corpus_path = opts.get("corpus", None)
    if corpus_path is None:
        raise UsageError("train requires --corpus")
    variant = opts.get("variant", "dc_cnn")
    epochs = opts.get("epochs", 200, int)
    batch_size = opts.get("batch_size", 16, int)
    lr = opts.get("lr", 2e-4, float)
    seed = opts.get("seed", 0, int)
    corpus = dataset.load_corpus(corpus_path)
    weights, history = _train_one(corpus, variant, epochs, batch_size, lr, seed)
    ckpt_path = Path(opts.get("out", str(out_dir / f"{variant}.ckpt")))
    loss_path = out_dir / f"{variant}_loss.csv"
    dataset.save_checkpoint(weights, ckpt_path)
    _write_loss_csv(history, loss_path)
    _write_manifest(out_dir, "train", opts.resolved, {"checkpoint": ckpt_path, "loss": loss_path})
    print(f"best val loss {min(history.val_loss):.4f} dB^2 at epoch {history.best_epoch}")
    return EXIT_OK


def _report_artifacts(report, out_dir: Path, prefix: str) -> dict:
    paths = {
        "report": out_dir / f"{prefix}report.csv",
        "boxes": out_dir / f"{prefix}boxes.csv",
        "sweep": out_dir / f"{prefix}sweep.csv",
        "summary": out_dir / f"{prefix}summary.json",
    }
    evaluation.write_report_csv(report, paths["report"])
    evaluation.write_box_csv(report, paths["boxes"])
    evaluation.write_sweep_csv(report, paths["sweep"])
    evaluation.write_summary_json(report, paths["summary"])
    return paths


def _build_estimators(weight_paths: list, include_baselines: bool = True) -> list:
    estimators = []
    if include_baselines:
        estimators.append(evaluation.oracle_estimator())
        estimators.append(evaluation.fft3bin_estimator())
    for path in weight_paths:
        estimators.append(evaluation.model_estimator(dataset.load_checkpoint(path)))
    return estimators


def cmd_evaluate(opts: _Options) -> int:
    out_dir = _output_dir(opts)
    corpus_path = opts.get("corpus", None)
    if corpus_path is None:
        raise UsageError("evaluate requires --corpus")
    weight_paths = getattr(opts._args, "weights", None) or []
    opts.resolved["weights"] = [str(p) for p in weight_paths]
    corpus = dataset.load_corpus(corpus_path)
    report = evaluation.evaluate(corpus, _build_estimators(weight_paths))
    artifacts = _report_artifacts(report, out_dir, "")
    _write_manifest(out_dir, "evaluate", opts.resolved, artifacts)
    for name, pct in sorted(report.overall_mae_pct.items()):
        print(f"{name}: MAE {pct:.2f}%")
    return EXIT_OK


def cmd_estimate(opts: _Options) -> int:
    burst_path = opts.get("burst", None)
    method = opts.get("method", None)
    if burst_path is None or method is None:
        raise UsageError("estimate requires --burst and --method")
    offset = opts.get("cw_offset_hz", 200e3, float)
    burst = dataset.load_burst(burst_path)
    if method == "oracle":
        estimate = spectral.extract_gain(signals.frequency_shift(burst, -offset))
    elif method == "fft3bin":
        estimate = spectral.fft_3bin_estimate(burst, offset)
    elif method in models.VARIANTS:
        weights_path = opts.get("weights", None)
        if weights_path is None:
            raise UsageError(f"method {method} requires --weights")
        weights = dataset.load_checkpoint(weights_path)
        feed = signals.frequency_shift(burst, -offset) if method == "dc_cnn" else burst
        estimate = models.predict_gain(weights, feed)
    else:
        raise UsageError(f"unknown method {method!r}")
    print(json.dumps({"est_dbm": estimate.power_dbm, "method": method}))
    return EXIT_OK


def cmd_sweep(opts: _Options) -> int:
    """Desk-scale end-to-end run: generate, train, evaluate."""
    out_dir = _output_dir(opts)
    corpus_path = Path(opts.get("corpus_out", str(out_dir / "corpus.cwpl")))
    opts.get("per_cell", 50, int)
    epochs = opts.get("epochs", 50, int)
    batch_size = opts.get("batch_size", 16, int)
    lr = opts.get("lr", 2e-4, float)
    seed = opts.get("seed", 0, int)
    variants = opts.get("variants", "dc_cnn")
    corpus = _generate_split_save(opts, out_dir, corpus_path)
    artifacts = {"corpus": corpus_path}
    estimators = _build_estimators([])
    for variant in [v.strip() for v in variants.split(",") if v.strip()]:
        weights, history = _train_one(corpus, variant, epochs, batch_size, lr, seed)
        ckpt_path = out_dir / f"{variant}.ckpt"
        loss_path = out_dir / f"{variant}_loss.csv"
        dataset.save_checkpoint(weights, ckpt_path)
        _write_loss_csv(history, loss_path)
        artifacts[f"checkpoint_{variant}"] = ckpt_path
        artifacts[f"loss_{variant}"] = loss_path
        estimators.append(evaluation.model_estimator(weights))
    report = evaluation.evaluate(corpus, estimators)
    artifacts.update(_report_artifacts(report, out_dir, ""))
    _write_manifest(out_dir, "sweep", opts.resolved, artifacts)
    for name, pct in sorted(report.overall_mae_pct.items()):
        print(f"{name}: MAE {pct:.2f}%")
    return EXIT_OK


def cmd_audit(opts: _Options) -> int:
    variant = opts.get("variant", "dc_cnn")
    spec = models.ModelSpec.for_variant(variant)
    weights = models.build_model(spec, init_seed=0)
    print(f"{variant}: trainable parameters per layer")
    for (name, count), (_, w_shape, b_shape) in zip(
        models.layer_parameter_counts(weights), spec.layer_shapes()
    ):
        shape = "x".join(str(d) for d in w_shape)
        print(f"  {name:<6} weight {shape:<10} bias {b_shape[0]:<4} -> {count:,}")
    print(f"total {models.count_parameters(weights):,}")
    print(f"receptive field {spec.receptive_field()} samples")
    return EXIT_OK


_HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "audit": cmd_audit,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="cwpower", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key=value options file")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("generate", help="synthesize and split a burst corpus")
    common(p)
    p.add_argument("--per-cell", dest="per_cell", type=int)
    p.add_argument("--master-seed", dest="master_seed", type=int)
    p.add_argument("--test-per-cell", dest="test_per_cell", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("train", help="train a model variant on a corpus")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--variant", choices=models.VARIANTS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out")

    p = sub.add_parser("evaluate", help="score estimators on the test split")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--weights", action="append", default=None)

    p = sub.add_parser("estimate", help="estimate tone power for one burst file")
    common(p)
    p.add_argument("--burst")
    p.add_argument("--method", choices=("oracle", "fft3bin") + models.VARIANTS)
    p.add_argument("--weights")
    p.add_argument("--cw-offset-hz", dest="cw_offset_hz", type=float)

    p = sub.add_parser("sweep", help="end-to-end generate + train + evaluate")
    common(p)
    p.add_argument("--per-cell", dest="per_cell", type=int)
    p.add_argument("--master-seed", dest="master_seed", type=int)
    p.add_argument("--test-per-cell", dest="test_per_cell", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--variants", help="comma-separated model variants")

    p = sub.add_parser("audit", help="print the per-layer parameter table")
    common(p)
    p.add_argument("--variant", choices=models.VARIANTS)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        config = read_config_file(args.config) if getattr(args, "config", None) else {}
        opts = _Options(args, config)
        return _HANDLERS[args.command](opts)
    except UsageError as err:
        print(f"cwpower: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (dataset.ContainerFormatError, OSError, ValueError) as err:
        print(f"cwpower: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ag.TrainingError as err:
        print(f"cwpower: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
