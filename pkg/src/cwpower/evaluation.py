"""Test-split scoring: per-burst errors, boxplot statistics, SIR sweeps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Corpus
from .models import ModelWeights, predict_gain_batch
from .signals import nominal_sir_db
from .spectral import extract_gain, fft_3bin_estimate

# Nominal SIRs are multiples of 0.1 dB; rounding keeps cells that share a
# nominal value in one sweep group despite float summation order.
_SIR_DECIMALS = 4


@dataclass(frozen=True)
class Estimator:
    """Named batch estimator mapping corpus records to gain estimates."""

    name: str
    run: callable


def oracle_estimator() -> Estimator:
    return Estimator("oracle", lambda records, cfg: [extract_gain(r.dc) for r in records])


def fft3bin_estimator() -> Estimator:
    def run(records, cfg):
        return [fft_3bin_estimate(r.raw, cfg.f_cw_offset_hz) for r in records]

    return Estimator("fft3bin", run)


def model_estimator(weights: ModelWeights) -> Estimator:
    variant = weights.spec.variant

    def run(records, cfg):
        bursts = [r.dc if variant == "dc_cnn" else r.raw for r in records]
        return predict_gain_batch(weights, bursts)

    return Estimator(variant, run)


@dataclass(frozen=True)
class BurstScore:
    cw_tx_dbm: float
    qpsk_tx_dbm: float
    sir_db: float
    estimator: str
    true_dbm: float
    est_dbm: float
    err_db: float
    err_pct: float


@dataclass(frozen=True)
class BoxStats:
    """Quartile summary of err_db; whiskers are the 1.5*IQR fences."""

    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float


@dataclass(frozen=True)
class SweepRow:
    sir_db: float
    estimator: str
    mae_db: float
    sigma_db: float
    n_bursts: int


@dataclass
class EvalReport:
    per_burst: list
    per_cell_box: dict
    per_sir_mae_db: list
    overall_mae_pct: dict


def _box_stats(errors: np.ndarray) -> BoxStats:
    q1, median, q3 = (float(q) for q in np.quantile(errors, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    return BoxStats(
        median=median, q1=q1, q3=q3, whisker_lo=q1 - 1.5 * iqr, whisker_hi=q3 + 1.5 * iqr
    )


def evaluate(corpus: Corpus, estimators: list) -> EvalReport:
    """Score every estimator on the test split of the corpus."""
    records = corpus.by_split("test")
    if not records:
        raise ValueError("corpus has no test records; run split_corpus first")
    cfg = corpus.rf_config
    scores = []
    for estimator in estimators:
        estimates = estimator.run(records, cfg)
        for record, estimate in zip(records, estimates):
            label = record.label
            true_dbm = label.cw_rx_dbm
            true_mw = 10.0 ** (true_dbm / 10.0)
            err_db = estimate.power_dbm - true_dbm
            err_pct = 100.0 * abs(estimate.power_mw - true_mw) / true_mw
            sir = round(nominal_sir_db(label.cw_tx_dbm, label.qpsk_tx_dbm, cfg), _SIR_DECIMALS)
            scores.append(
                BurstScore(
                    cw_tx_dbm=label.cw_tx_dbm,
                    qpsk_tx_dbm=label.qpsk_tx_dbm,
                    sir_db=sir,
                    estimator=estimator.name,
                    true_dbm=true_dbm,
                    est_dbm=estimate.power_dbm,
                    err_db=err_db,
                    err_pct=err_pct,
                )
            )

    boxes: dict = {}
    groups: dict = {}
    for score in scores:
        groups.setdefault((score.estimator, score.cw_tx_dbm, score.qpsk_tx_dbm), []).append(
            score.err_db
        )
    for key, errs in groups.items():
        boxes[key] = _box_stats(np.asarray(errs))

    overall: dict = {}
    for estimator in estimators:
        pct = [s.err_pct for s in scores if s.estimator == estimator.name]
        overall[estimator.name] = float(np.mean(pct))

    report = EvalReport(
        per_burst=scores, per_cell_box=boxes, per_sir_mae_db=[], overall_mae_pct=overall
    )
    report.per_sir_mae_db = sir_sweep_table(report)
    return report


def sir_sweep_table(report: EvalReport) -> list:
    """Per-estimator MAE(dB) +- sigma grouped by nominal SIR, ascending."""
    if not report.per_burst:
        raise ValueError("empty report")
    groups: dict = {}
    for score in report.per_burst:
        groups.setdefault((score.sir_db, score.estimator), []).append(abs(score.err_db))
    rows = []
    for (sir, name), errs in sorted(groups.items()):
        arr = np.asarray(errs)
        rows.append(
            SweepRow(
                sir_db=sir,
                estimator=name,
                mae_db=float(np.mean(arr)),
                sigma_db=float(np.std(arr)),
                n_bursts=arr.size,
            )
        )
    return rows


def cell_mae_db(report: EvalReport, estimator: str) -> dict:
    """Mean |err_db| per grid cell for one estimator."""
    groups: dict = {}
    for score in report.per_burst:
        if score.estimator == estimator:
            groups.setdefault((score.cw_tx_dbm, score.qpsk_tx_dbm, score.sir_db), []).append(
                abs(score.err_db)
            )
    return {key: float(np.mean(v)) for key, v in groups.items()}


def cell_median_abs_err_db(report: EvalReport, estimator: str) -> dict:
    groups: dict = {}
    for score in report.per_burst:
        if score.estimator == estimator:
            groups.setdefault((score.cw_tx_dbm, score.qpsk_tx_dbm, score.sir_db), []).append(
                abs(score.err_db)
            )
    return {key: float(np.median(v)) for key, v in groups.items()}


# --- serialization ----------------------------------------------------------


def write_report_csv(report: EvalReport, path) -> None:
    """One row per burst-estimator pair."""
    fields = [
        "cw_tx_dbm",
        "qpsk_tx_dbm",
        "sir_db",
        "estimator",
        "true_dbm",
        "est_dbm",
        "err_db",
        "err_pct",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for score in report.per_burst:
            writer.writerow({k: _fmt(v) for k, v in asdict(score).items()})


def write_box_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["estimator", "cw_tx_dbm", "qpsk_tx_dbm", "median", "q1", "q3", "whisker_lo", "whisker_hi"]
        )
        for (name, cw, qpsk), box in sorted(report.per_cell_box.items()):
            writer.writerow(
                [name, _fmt(cw), _fmt(qpsk)]
                + [_fmt(v) for v in (box.median, box.q1, box.q3, box.whisker_lo, box.whisker_hi)]
            )


def write_sweep_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sir_db", "estimator", "mae_db", "sigma_db", "n_bursts"])
        for row in report.per_sir_mae_db:
            writer.writerow([_fmt(row.sir_db), row.estimator, _fmt(row.mae_db), _fmt(row.sigma_db), row.n_bursts])


def write_summary_json(report: EvalReport, path) -> None:
    summary = {
        "overall_mae_pct": report.overall_mae_pct,
        "per_sir_mae_db": [asdict(row) for row in report.per_sir_mae_db],
        "n_scores": len(report.per_burst),
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "-inf" if value < 0 else "inf"
        return repr(value)
    return value
