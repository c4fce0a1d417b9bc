"""Experiment configuration and orchestration.

Pipeline for one configuration::

    ingest -> normalise (train stats) -> seasonal difference -> reservoir
    -> optional PCA (fit on train states) -> train readout (timed)
    -> recalibrate on the calibration split (not for QR)
    -> evaluate on the test split in the original scale

The reservoir and the data preparation depend only on the data and
reservoir configuration, so every run and every method sees the same
states. Per-run seeds come from ``run_seed(master_seed, run_index)``.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import data as dp
from .calibration import CalibrationMap, apply_recalibrator, fit_recalibrator
from .forecast import DEFAULT_LEVELS, EnsembleForecast, QuantileForecast
from .hmc import HmcConfig
from .methods import METHODS, Fitted, fit_dropout, fit_mcmc, fit_qr, fit_ssvs, fit_variational
from .metrics import MetricsReport, calibration_curve, evaluate, extract_quantiles
from .priors import Prior
from .reservoir import ReservoirConfig, init_reservoir, pca_fit, pca_transform

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    """An error tagged with the pipeline stage it came from."""

    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, et, ev, tb):
        if ev is not None and not isinstance(ev, StageError):
            raise StageError(self.name, ev) from ev
        return False


# ---------------------------------------------------------------------------
# configuration

# method -> hyperparameters it accepts (beyond the readout architecture)
_METHOD_FIELDS = {
    "qr": {"lr", "steps", "batch_size"},
    "dropout": {"lr", "steps", "batch_size", "keep_prob", "n_samples"},
    "vi": {"lr", "cov_lr", "steps", "prior", "noise_prior", "rank", "n_mc", "n_samples"},
    "mcmc": {"prior", "noise_prior", "hmc", "n_samples"},
    "mcmc_pca": {"prior", "noise_prior", "hmc", "n_samples", "pca_dim"},
    "ssvs": {"prior", "noise_prior", "hmc", "n_samples", "pca_dim"},
}
_OPTIONAL = {"lr", "cov_lr", "steps", "batch_size", "keep_prob", "n_samples", "prior", "noise_prior", "rank", "n_mc", "hmc",
             "pca_dim"}

_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "qr": {"hidden": [8], "activation": "tanh", "lr": 1e-3, "steps": 1000, "batch_size": 128},
    "dropout": {"hidden": [32], "activation": "relu", "lr": 1e-2, "steps": 250, "batch_size": 128,
                "keep_prob": 0.57, "n_samples": 500},
    "vi": {"hidden": [8], "activation": "tanh", "lr": 1e-2, "cov_lr": 1e-3, "steps": 2000, "prior": "N(0,1)",
           "noise_prior": "Unif(0,1)", "n_mc": 1, "n_samples": 500},
    "mcmc": {"hidden": [8], "activation": "tanh", "prior": "N(0,1)", "noise_prior": "Unif(0,10)",
             "n_samples": 500},
    "mcmc_pca": {"hidden": [8], "activation": "tanh", "prior": "N(0,1)", "noise_prior": "Unif(0,10)",
                 "n_samples": 500, "pca_dim": "auto"},
    "ssvs": {"hidden": [], "activation": "tanh", "prior": "horseshoe", "noise_prior": "Unif(0,10)",
             "n_samples": 500},
}


@dataclass(frozen=True)
class DataConfig:
    """Either ``csv`` (+ ``column``) or ``synthetic`` (kwargs of ``synth_seasonal``)."""

    csv: Optional[str] = None
    column: Any = 0
    header: bool = True
    synthetic: Optional[Dict[str, Any]] = None
    exclude: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        if (self.csv is None) == (self.synthetic is None):
            raise ValueError("data config needs exactly one of 'csv' or 'synthetic'")
        object.__setattr__(self, "exclude", tuple(tuple(r) for r in self.exclude))
        if self.synthetic is not None:
            object.__setattr__(self, "synthetic", dict(self.synthetic))

    def load(self) -> dp.TimeSeries:
        if self.csv is not None:
            series = dp.load_csv(self.csv, self.column, header=self.header)
        else:
            series = dp.synth_seasonal(**self.synthetic)
        if self.exclude:
            series = dp.exclude_ranges(series, self.exclude)
        return series


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig
    method: str = "qr"
    seasonal: dp.SeasonalSpec = dp.SeasonalSpec(7, 1)
    split: dp.SplitSpec = dp.SplitSpec()
    reservoir: ReservoirConfig = ReservoirConfig()
    washout: int = 100
    hidden: Optional[Tuple[int, ...]] = None
    activation: Optional[str] = None
    lr: Optional[float] = None
    cov_lr: Optional[float] = None
    steps: Optional[int] = None
    batch_size: Optional[int] = None
    keep_prob: Optional[float] = None
    prior: Optional[str] = None
    noise_prior: Optional[str] = None
    rank: Optional[int] = None
    n_mc: Optional[int] = None
    n_samples: Optional[int] = None
    hmc: Optional[HmcConfig] = None
    pca_dim: Any = None
    levels: Tuple[float, ...] = tuple(DEFAULT_LEVELS.tolist())
    n_runs: int = 1
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        allowed = _METHOD_FIELDS[self.method]
        for f in _OPTIONAL:
            if getattr(self, f) is not None and f not in allowed:
                raise ValueError(f"field {f!r} does not apply to method {self.method!r}")
        if self.prior is not None:
            p = Prior.parse(self.prior)
            if (p.kind == "horseshoe") != (self.method == "ssvs"):
                raise ValueError("the horseshoe prior is used by (and only by) ssvs")
        if self.method == "ssvs" and self.hidden:
            raise ValueError("ssvs uses a linear readout; hidden layers are not allowed")
        if self.keep_prob is not None and not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must lie in (0, 1]")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        levels = np.asarray(self.levels, dtype=float)
        for t in (0.025, 0.5, 0.975):
            if not np.any(np.isclose(levels, t, rtol=0, atol=1e-12)):
                raise ValueError(f"metric levels must include {t}")
        if self.hidden is not None:
            object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "levels", tuple(float(t) for t in self.levels))

    def get(self, key: str):
        """Configured value, or the method default."""
        v = getattr(self, key)
        if v is None:
            v = _DEFAULTS[self.method].get(key)
        return v

    @property
    def hmc_config(self) -> HmcConfig:
        return self.hmc if self.hmc is not None else HmcConfig()

    # -- (de)serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        d["data"] = DataConfig(**d["data"])
        if "seasonal" in d:
            d["seasonal"] = dp.SeasonalSpec(**d["seasonal"])
        if "split" in d:
            d["split"] = dp.SplitSpec(**d["split"])
        if "reservoir" in d:
            d["reservoir"] = ReservoirConfig(**d["reservoir"])
        if d.get("hmc") is not None:
            d["hmc"] = HmcConfig(**d["hmc"])
        if d.get("hidden") is not None:
            d["hidden"] = tuple(d["hidden"])
        if "levels" in d:
            d["levels"] = tuple(d["levels"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def default_study(method: str, **overrides) -> ExperimentConfig:
    """The desk-scale synthetic study: length 2000, period 7, horizon 1."""
    base = dict(
        data=DataConfig(synthetic={"length": 2000, "period": 7, "trend": 0.001, "noise_std": 0.1, "seed": 0}),
        method=method,
        seasonal=dp.SeasonalSpec(7, 1),
        reservoir=ReservoirConfig(n_units=500, spectral_radius=0.9, density=0.1, seed=0),
        washout=100,
    )
    if method in ("mcmc", "mcmc_pca", "ssvs"):
        base["hmc"] = HmcConfig()
    base.update(overrides)
    return ExperimentConfig(**base)


def run_seed(master_seed: int, run_index: int) -> int:
    """Seed of run ``run_index``: first word of SeedSequence([master, index])."""
    return int(np.random.SeedSequence([int(master_seed), int(run_index)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# data preparation


@dataclass
class Prepared:
    raw: dp.TimeSeries
    norm: dp.NormStats
    z: np.ndarray  # normalised series
    train: dp.SupervisedSet
    cal: dp.SupervisedSet
    test: dp.SupervisedSet
    split_sizes: Tuple[int, int, int]
    pca_dim: Optional[int] = None


def prepare(cfg: ExperimentConfig) -> Prepared:
    with _stage("ingest"):
        raw = cfg.data.load()
    with _stage("normalize"):
        n_train, n_cal, n_test = dp.split_sizes(len(raw), cfg.split)
        train_raw, _, _ = dp.split(raw, cfg.split)
        stats = dp.fit_normalizer(train_raw, source="train")
        z = dp.apply_normalizer(raw, stats)
    with _stage("difference"):
        diff = dp.seasonal_difference(z, cfg.seasonal)
    with _stage("reservoir"):
        res = init_reservoir(cfg.reservoir)
        states = res.run(diff, cfg.washout)
        pairs = dp.make_supervised(states, diff, cfg.seasonal.h)
        # back to original-series time
        t_orig = pairs.target_index + cfg.seasonal.s
        pairs = dp.SupervisedSet(pairs.X, pairs.y, t_orig)
        train = pairs.subset(t_orig < n_train)
        cal = pairs.subset((t_orig >= n_train) & (t_orig < n_train + n_cal))
        test = pairs.subset(t_orig >= n_train + n_cal)
        for nm, part in (("train", train), ("calibration", cal), ("test", test)):
            if len(part) == 0:
                raise ValueError(f"{nm} split has no supervised pairs (washout/horizon too long?)")
    prep = Prepared(raw, stats, z.values, train, cal, test, (n_train, n_cal, n_test))
    pca_dim = cfg.get("pca_dim") if cfg.method in ("mcmc_pca", "ssvs") else None
    if cfg.method == "mcmc_pca" or pca_dim is not None:
        with _stage("pca"):
            model = pca_fit(train.X, None if pca_dim in (None, "auto") else int(pca_dim))
            prep = replace(
                prep,
                train=dp.SupervisedSet(pca_transform(model, train.X).states, train.y, train.target_index),
                cal=dp.SupervisedSet(pca_transform(model, cal.X).states, cal.y, cal.target_index),
                test=dp.SupervisedSet(pca_transform(model, test.X).states, test.y, test.target_index),
                pca_dim=model.dim,
            )
    return prep


def to_original_scale(forecast, prep: Prepared, target_index, spec: dp.SeasonalSpec):
    """Undo seasonal differencing and normalisation (an affine map per step)."""
    s = prep.norm
    if isinstance(forecast, EnsembleForecast):
        v = dp.reconstruct_forecast(forecast.samples, prep.z, target_index, spec)
        return EnsembleForecast(v * s.std + s.mean, forecast.source)
    v = dp.reconstruct_forecast(forecast.values, prep.z, target_index, spec)
    return QuantileForecast(v * s.std + s.mean, forecast.levels)


# ---------------------------------------------------------------------------
# running


def fit_method(cfg: ExperimentConfig, X, y, seed: int) -> Fitted:
    g = cfg.get
    hidden = list(g("hidden") or [])
    act = g("activation")
    m = cfg.method
    if m == "qr":
        return fit_qr(X, y, hidden, act, np.asarray(cfg.levels), g("lr"), g("steps"), seed, g("batch_size"))
    if m == "dropout":
        return fit_dropout(X, y, hidden, act, g("keep_prob"), g("lr"), g("steps"), seed, g("n_samples"),
                           g("batch_size"))
    if m == "vi":
        return fit_variational(X, y, hidden, act, g("prior"), g("noise_prior"), g("lr"), g("steps"), seed,
                               g("rank"), g("n_mc"), g("n_samples"), g("cov_lr"))
    hmc = replace(cfg.hmc_config, seed=seed)
    if m in ("mcmc", "mcmc_pca"):
        return fit_mcmc(X, y, hidden, act, g("prior"), g("noise_prior"), hmc, g("n_samples"), m)
    return fit_ssvs(X, y, g("noise_prior"), hmc, g("n_samples"))


@dataclass
class SingleRun:
    seed: int
    metrics: MetricsReport  # test split, before recalibration
    metrics_recal: Optional[MetricsReport]  # test split, after recalibration (None for QR)
    val_metrics: MetricsReport  # calibration/validation split
    train_time: float
    n_params: int
    diagnostics: Dict[str, float]
    curves: Dict[str, List[float]] = field(repr=False, default_factory=dict)
    trajectory: Dict[str, List[float]] = field(repr=False, default_factory=dict)
    calibration_map: Optional[dict] = field(repr=False, default=None)

    def to_dict(self, include_time: bool = True) -> dict:
        d = {
            "seed": self.seed,
            "metrics": self.metrics.to_dict(include_time=False),
            "metrics_recal": None if self.metrics_recal is None else self.metrics_recal.to_dict(include_time=False),
            "val_metrics": self.val_metrics.to_dict(include_time=False),
            "n_params": self.n_params,
            "diagnostics": {k: v for k, v in self.diagnostics.items() if include_time or "time" not in k},
        }
        if include_time:
            d["train_time"] = self.train_time
        return d


def _aggregate(reports: Sequence[MetricsReport]) -> Dict[str, Dict[str, float]]:
    out = {}
    for key in ("mse", "cal", "width95", "coverage95", "mcrps"):
        vals = np.array([getattr(r, key) for r in reports])
        out[key] = {"mean": float(vals.mean()), "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
    return out


@dataclass
class RunReport:
    config: ExperimentConfig
    runs: List[SingleRun]

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def aggregate(self) -> dict:
        agg = {"metrics": _aggregate([r.metrics for r in self.runs]),
               "val_metrics": _aggregate([r.val_metrics for r in self.runs])}
        if all(r.metrics_recal is not None for r in self.runs):
            agg["metrics_recal"] = _aggregate([r.metrics_recal for r in self.runs])
        return agg

    def train_time(self) -> Dict[str, float]:
        t = np.array([r.train_time for r in self.runs])
        return {"mean": float(t.mean()), "sd": float(t.std(ddof=1)) if t.size > 1 else 0.0}

    def metrics_dict(self) -> dict:
        """Everything except wall-clock measurements (bit-reproducible)."""
        return {
            "config": self.config.to_dict(),
            "method": self.config.method,
            "n_runs": self.n_runs,
            "runs": [r.to_dict(include_time=False) for r in self.runs],
            "aggregate": self.aggregate(),
            "quantile_interpolation": "linear",
        }

    def timing_dict(self) -> dict:
        return {"method": self.config.method, "seed": self.config.seed,
                "train_time": self.train_time(), "per_run": [r.train_time for r in self.runs]}

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = self.config.name or self.config.method
        (out / f"{tag}_metrics.json").write_text(json.dumps(self.metrics_dict(), indent=2, sort_keys=True))
        (out / f"{tag}_timing.json").write_text(json.dumps(self.timing_dict(), indent=2, sort_keys=True))
        first = self.runs[0]
        with (out / f"{tag}_calibration.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "tau_before", "tau_after"])
            after = first.curves.get("after")
            for i, t in enumerate(first.curves["levels"]):
                w.writerow([repr(t), repr(first.curves["before"][i]), "" if after is None else repr(after[i])])
        with (out / f"{tag}_quantiles.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            levels = first.trajectory["levels"]
            w.writerow(["t", "truth"] + [repr(t) for t in levels])
            for t, yt, row in zip(first.trajectory["t"], first.trajectory["truth"], first.trajectory["quantiles"]):
                w.writerow([t, repr(yt)] + [repr(v) for v in row])
        return out


def _single_run(cfg: ExperimentConfig, prep: Prepared, run_index: int) -> SingleRun:
    seed = run_seed(cfg.seed, run_index)
    levels = np.asarray(cfg.levels)
    with _stage(f"train:{cfg.method}"):
        fitted = fit_method(cfg, prep.train.X, prep.train.y, seed)
    raw = prep.raw.values

    def forecast(part: dp.SupervisedSet, pred_seed: int):
        fc = fitted.predict(part.X, pred_seed)
        return to_original_scale(fc, prep, part.target_index, cfg.seasonal)

    with _stage("predict"):
        fc_cal = forecast(prep.cal, seed + 1)
        fc_test = forecast(prep.test, seed + 2)
    y_cal = raw[prep.cal.target_index]
    y_test = raw[prep.test.target_index]

    def quantiles(fc):
        return fc if isinstance(fc, QuantileForecast) else extract_quantiles(fc, levels)

    with _stage("evaluate"):
        q_cal, q_test = quantiles(fc_cal), quantiles(fc_test)
        val = evaluate(q_cal, y_cal)
        before = evaluate(q_test, y_test, fitted.train_time)
        curve_before = calibration_curve(q_test, y_test)
    recal = None
    cmap: Optional[CalibrationMap] = None
    curve_after = None
    if cfg.method != "qr":
        with _stage("recalibrate"):
            cmap = fit_recalibrator(calibration_curve(q_cal, y_cal), source="calibration")
            if cmap.source != "calibration" or prep.norm.source != "train":
                raise RuntimeError("recalibration must use calibration-split curves and train-split statistics")
            q_test_recal = apply_recalibrator(cmap, fc_test, levels)
            recal = evaluate(q_test_recal, y_test, fitted.train_time)
            curve_after = calibration_curve(q_test_recal, y_test).empirical.tolist()
    shown = q_test if recal is None else q_test_recal
    return SingleRun(
        seed=seed,
        metrics=before,
        metrics_recal=recal,
        val_metrics=val,
        train_time=fitted.train_time,
        n_params=fitted.n_params,
        diagnostics=fitted.diagnostics,
        curves={"levels": levels.tolist(), "before": curve_before.empirical.tolist(), "after": curve_after},
        trajectory={"t": prep.test.target_index.tolist(), "truth": y_test.tolist(),
                    "levels": levels.tolist(), "quantiles": shown.values.tolist()},
        calibration_map=None if cmap is None else cmap.to_dict(),
    )


def run_experiment(cfg: ExperimentConfig, prep: Optional[Prepared] = None) -> RunReport:
    prep = prepare(cfg) if prep is None else prep
    runs = []
    for i in range(cfg.n_runs):
        logger.info("%s run %d/%d", cfg.method, i + 1, cfg.n_runs)
        runs.append(_single_run(cfg, prep, i))
    return RunReport(cfg, runs)


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridSpec:
    """Value lists per hyperparameter. ``n_layers`` x ``units`` define the
    hidden widths: ``units`` in the first layer, halving in each next one."""

    values: Dict[str, Tuple[Any, ...]]

    def __post_init__(self):
        vals = {k: tuple(v) for k, v in dict(self.values).items()}
        if not vals or any(len(v) == 0 for v in vals.values()):
            raise ValueError("grid must have at least one value per hyperparameter")
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return int(np.prod([len(v) for v in self.values.values()]))

    def candidates(self) -> List[Dict[str, Any]]:
        keys = list(self.values)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.values[k] for k in keys))]

    @classmethod
    def default_for(cls, method: str) -> "GridSpec":
        """The default search grid for ``method``."""
        g: Dict[str, Tuple[Any, ...]] = {"n_layers": (1, 2, 3), "units": (8, 16, 32, 128, 256, 512),
                                          "activation": ("tanh", "relu")}
        if method in ("vi", "mcmc", "mcmc_pca"):
            g["prior"] = ("N(0,1)", "N(0,10)", "Unif(0,1)", "Unif(0,10)")
        if method in ("vi", "dropout", "qr"):
            g["lr"] = (1e-4, 1e-3, 1e-2, 1e-1)
        if method == "dropout":
            g["keep_prob"] = (0.1, 0.3, 0.5, 0.7, 0.9)
        if method == "ssvs":
            g = {"prior": ("horseshoe",)}
        return cls(g)


def apply_candidate(base: ExperimentConfig, cand: Dict[str, Any]) -> ExperimentConfig:
    cand = dict(cand)
    n_layers = cand.pop("n_layers", None)
    units = cand.pop("units", None)
    if n_layers is not None or units is not None:
        n_layers = n_layers if n_layers is not None else len(base.get("hidden") or [1])
        units = units if units is not None else (list(base.get("hidden") or [8]) or [8])[0]
        cand["hidden"] = tuple(max(1, int(units) // 2**i) for i in range(int(n_layers)))
    return replace(base, n_runs=1, **cand)


@dataclass
class GridResult:
    best: ExperimentConfig
    leaderboard: List[Dict[str, Any]]
    failures: List[Dict[str, Any]]


def _evaluate_candidate(args):
    base, cand, prep = args
    cfg = apply_candidate(base, cand)
    rep = run_experiment(cfg, prep)
    r = rep.runs[0]
    return {"candidate": cand, "val_mse": r.val_metrics.mse, "val_cal": r.val_metrics.cal,
            "n_params": r.n_params, "train_time": r.train_time}


def grid_search(grid: GridSpec, base: ExperimentConfig, workers: int = 1) -> GridResult:
    """Evaluate each candidate once; rank by validation MSE, then parameter
    count, then validation cal."""
    cands = grid.candidates()
    logger.info("grid search over %d candidates", len(cands))
    prep = prepare(base)
    if base.method == "mcmc_pca" or base.pca_dim is not None:
        prep = None  # depends only on base, but keep candidates self-contained
    jobs = [(base, c, prep) for c in cands]
    rows, failures = [], []
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            futures = [ex.submit(_evaluate_candidate, j) for j in jobs]
            results = []
            for c, f in zip(cands, futures):
                try:
                    results.append(f.result())
                except Exception as e:  # candidate failure is recorded, not fatal
                    failures.append({"candidate": c, "error": str(e)})
            rows = results
    else:
        for j in jobs:
            try:
                rows.append(_evaluate_candidate(j))
            except Exception as e:
                failures.append({"candidate": j[1], "error": str(e)})
    if not rows:
        raise RuntimeError(f"all {len(cands)} grid candidates failed; first error: {failures[0]['error']}")
    rows.sort(key=lambda r: (r["val_mse"], r["n_params"], r["val_cal"]))
    best = replace(apply_candidate(base, rows[0]["candidate"]), n_runs=base.n_runs)
    return GridResult(best, rows, failures)


# ---------------------------------------------------------------------------
# method comparison


def _data_key(cfg: ExperimentConfig):
    return (cfg.data, cfg.seasonal, cfg.split, cfg.reservoir, cfg.washout)


def compare_methods(cfgs: Sequence[ExperimentConfig], out_dir=None) -> List[RunReport]:
    """Run several methods on one dataset and one reservoir."""
    if not cfgs:
        raise ValueError("nothing to compare")
    key = _data_key(cfgs[0])
    for c in cfgs[1:]:
        if _data_key(c) != key:
            raise ValueError(f"config for {c.method!r} uses a different dataset/reservoir setup")
    reports = [run_experiment(c) for c in cfgs]
    if out_dir is not None:
        write_comparison(reports, out_dir)
    return reports


def comparison_rows(reports: Sequence[RunReport]) -> List[Dict[str, Any]]:
    rows = []
    for rep in reports:
        agg = rep.aggregate()
        row = {"method": rep.config.name or rep.config.method}
        for k, v in agg["metrics"].items():
            row[k] = v["mean"]
            row[f"{k}_sd"] = v["sd"]
        if "metrics_recal" in agg:
            for k, v in agg["metrics_recal"].items():
                row[f"{k}_recal"] = v["mean"]
        t = rep.train_time()
        row["train_time"], row["train_time_sd"] = t["mean"], t["sd"]
        rows.append(row)
    return rows


def write_comparison(reports: Sequence[RunReport], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = comparison_rows(reports)
    cols = sorted({k for r in rows for k in r} - {"method"})
    with (out / "comparison.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method"] + cols)
        for r in rows:
            w.writerow([r["method"]] + ["" if r.get(c) is None else repr(r[c]) for c in cols])
    (out / "comparison.json").write_text(json.dumps(rows, indent=2, sort_keys=True))
    for rep in reports:
        rep.write(out)
    return out
