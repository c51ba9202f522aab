"""Sparsity sweeps, ablation runs, and the shared report container."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, NormalizationStats, SplitSpec, normalize, split, window_list
from .model import VARIANT_IDS, ModelConfig, build_variant
from .training import TrainConfig, evaluate, train

REPORT_FIELDS = ("dataset", "variant", "gamma", "horizon", "seed", "mse", "mae", "epochs", "wall_s")
REPORT_HEADER = ",".join(REPORT_FIELDS)


@dataclass
class EvalReport:
    rows: list[dict]

    def to_csv(self) -> str:
        lines = [REPORT_HEADER]
        for row in self.rows:
            lines.append(",".join(_fmt(row.get(f)) for f in REPORT_FIELDS))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    def averaged(self) -> "EvalReport":
        """One row per (dataset, variant, gamma, horizon): arithmetic mean over runs."""
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            key = (row["dataset"], row["variant"], row["gamma"], row["horizon"])
            groups.setdefault(key, []).append(row)
        out = []
        for (dataset, variant, gamma, horizon), members in groups.items():
            out.append(
                {
                    "dataset": dataset,
                    "variant": variant,
                    "gamma": gamma,
                    "horizon": horizon,
                    "seed": f"avg{len(members)}",
                    "mse": float(np.mean([m["mse"] for m in members])),
                    "mae": float(np.mean([m["mae"] for m in members])),
                    "epochs": float(np.mean([m["epochs"] for m in members])),
                    "wall_s": float(np.sum([m["wall_s"] for m in members])),
                }
            )
        return EvalReport(out)

    def table(self) -> str:
        widths = {f: max(len(f), *(len(_fmt(r.get(f))) for r in self.rows)) if self.rows else len(f)
                  for f in REPORT_FIELDS}
        header = "  ".join(f.ljust(widths[f]) for f in REPORT_FIELDS)
        ruler = "  ".join("-" * widths[f] for f in REPORT_FIELDS)
        body = [
            "  ".join(_fmt(r.get(f)).ljust(widths[f]) for f in REPORT_FIELDS) for r in self.rows
        ]
        return "\n".join([header, ruler, *body])


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


@dataclass
class PreparedData:
    """Normalized splits plus their window lists for one (L, K) setting."""

    train: list
    val: list
    test: list
    stats: NormalizationStats
    name: str


def prepare_windows(ds: Dataset, spec: SplitSpec, input_len: int, horizon: int) -> PreparedData:
    train_ds, val_ds, test_ds = split(ds, spec)
    stats = NormalizationStats.from_train(train_ds.values)
    return PreparedData(
        train=window_list(normalize(train_ds, stats), input_len, horizon),
        val=window_list(normalize(val_ds, stats), input_len, horizon),
        test=window_list(normalize(test_ds, stats), input_len, horizon),
        stats=stats,
        name=ds.name,
    )


def run_one(ds: Dataset, spec: SplitSpec, model_cfg: ModelConfig, train_cfg: TrainConfig,
            prepared: PreparedData | None = None):
    """Train one configuration and evaluate on the test split.

    Returns (report row, model, result, prepared data).
    """
    if prepared is None:
        prepared = prepare_windows(ds, spec, model_cfg.input_len, model_cfg.horizon)
    model = build_variant(model_cfg)
    result = train(model, prepared.train, prepared.val, train_cfg)
    test_mse, test_mae = evaluate(model, prepared.test)
    row = {
        "dataset": prepared.name,
        "variant": model_cfg.variant,
        "gamma": model_cfg.gamma,
        "horizon": model_cfg.horizon,
        "seed": model_cfg.seed,
        "mse": test_mse,
        "mae": test_mae,
        "epochs": result.epochs_run,
        "wall_s": result.wall_s,
    }
    return row, model, result, prepared


def sparsity_sweep(ds: Dataset, spec: SplitSpec, gammas: list[float], horizons: list[int],
                   model_cfg: ModelConfig, train_cfg: TrainConfig,
                   seeds: list[int] | None = None) -> EvalReport:
    """Train and evaluate per (gamma, horizon, seed); one report row each."""
    seeds = seeds or [model_cfg.seed]
    rows = []
    for horizon in horizons:
        prepared = prepare_windows(ds, spec, model_cfg.input_len, horizon)
        for gamma in gammas:
            for seed in seeds:
                cfg = replace(model_cfg, gamma=gamma, horizon=horizon, seed=seed)
                t_cfg = replace(train_cfg, seed=seed)
                row, _, _, _ = run_one(ds, spec, cfg, t_cfg, prepared)
                rows.append(row)
    return EvalReport(rows)


def ablation_run(ds: Dataset, spec: SplitSpec, variants: list[str], horizons: list[int],
                 model_cfg: ModelConfig, train_cfg: TrainConfig,
                 seeds: list[int] | None = None) -> EvalReport:
    """Train and evaluate each wiring variant under a shared schedule."""
    for v in variants:
        if v not in VARIANT_IDS:
            raise ValueError(f"unknown variant {v!r}; expected one of {VARIANT_IDS}")
    seeds = seeds or [model_cfg.seed]
    rows = []
    for horizon in horizons:
        prepared = prepare_windows(ds, spec, model_cfg.input_len, horizon)
        for variant in variants:
            for seed in seeds:
                cfg = replace(model_cfg, variant=variant, horizon=horizon, seed=seed)
                t_cfg = replace(train_cfg, seed=seed)
                row, _, _, _ = run_one(ds, spec, cfg, t_cfg, prepared)
                rows.append(row)
    return EvalReport(rows)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0
