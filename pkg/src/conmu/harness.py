"""Config-driven experiment harness: single runs, knob sweeps, report tables.

Everything an experiment emits is fixed by the pair (config file,
master_seed): every RNG stream is derived by hashing the master seed with
the consuming component's name and trial index, so method results do not
depend on execution order or parallelism. Wall-clock timings are the one
exception; they are collected in a separate sidecar so the canonical
results stay byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .data import (ForgetSplit, LabeledDataset, gen_synthetic, load_csv,
                   split_classwise_forget, split_random_forget, standardize_features)
from .engine import (ControlKnobs, conmu_unlearn, finetune_baseline,
                     gradient_ascent_baseline, method_work_units, retrain_baseline)
from .metrics import MetricsReport, evaluate, frm_score, train_mia
from .model import ArchitectureSpec, TrainConfig, init_model, mlp, train
from .noise import NoiseConfig
from .proxy import ProxyConfig
from .selection import SelectionBound

RESULTS_SCHEMA = "conmu-results-v1"
SWEEP_SCHEMA = "conmu-sweep-v1"
METHODS = ("retrain", "conmu", "finetune", "gradient_ascent")
SWEEP_AXES = ("selection_fraction", "alpha", "delta")

METRIC_KEYS = ("ta", "fa", "ra", "mia", "frm", "work_units")


class ConfigError(ValueError):
    """Configuration problem, message names the offending field."""


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and a component label path."""
    h = hashlib.sha256(str(int(master_seed)).encode("ascii"))
    for p in parts:
        h.update(b"/")
        h.update(str(p).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") & (2**63 - 1)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DatasetConfig:
    synthetic: Optional[dict] = None
    csv: Optional[dict] = None
    test_csv: Optional[dict] = None
    holdout_fraction: Optional[float] = None
    standardize: bool = False


@dataclass(frozen=True)
class ForgetConfig:
    mode: str = "random"
    fraction: float = 0.2
    target_class: Optional[int] = None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    forget: ForgetConfig = field(default_factory=ForgetConfig)
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "relu"
    original_training: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20))
    knobs: ControlKnobs = field(default_factory=ControlKnobs)
    methods: tuple[str, ...] = ("conmu", "finetune", "gradient_ascent")
    master_seed: int = 0
    trials: int = 5


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}.{key}: required field is missing")
    return d[key]


def _check_keys(d: dict, allowed: set, path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")


def _parse_train(d: dict, path: str, defaults: TrainConfig) -> TrainConfig:
    _check_keys(d, {"epochs", "learning_rate", "batch_size", "seed"}, path)
    try:
        return TrainConfig(
            epochs=int(d.get("epochs", defaults.epochs)),
            learning_rate=float(d.get("learning_rate", defaults.learning_rate)),
            batch_size=int(d.get("batch_size", defaults.batch_size)),
            seed=int(d.get("seed", defaults.seed)))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_bound(d: dict, path: str, default: SelectionBound) -> SelectionBound:
    _check_keys(d, {"z_lower", "z_upper"}, path)
    try:
        return SelectionBound(float(d.get("z_lower", default.z_lower)),
                              float(d.get("z_upper", default.z_upper)))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_knobs(d: dict, path: str) -> ControlKnobs:
    _check_keys(d, {"forget_bound", "retain_bound", "noise", "proxy", "gamma",
                    "finetune", "prune_sparsity", "kept_fraction"}, path)
    base = ControlKnobs()
    try:
        noise_d = d.get("noise", {})
        _check_keys(noise_d, {"alpha", "noise_mean", "noise_std", "seed"}, f"{path}.noise")
        noise = NoiseConfig(alpha=float(noise_d.get("alpha", base.noise.alpha)),
                            noise_mean=float(noise_d.get("noise_mean", base.noise.noise_mean)),
                            noise_std=float(noise_d.get("noise_std", base.noise.noise_std)),
                            seed=int(noise_d.get("seed", base.noise.seed)))
        proxy_d = d.get("proxy", {})
        _check_keys(proxy_d, {"delta_epochs", "learning_rate", "batch_size", "seed"},
                    f"{path}.proxy")
        proxy = ProxyConfig(delta_epochs=int(proxy_d.get("delta_epochs", base.proxy.delta_epochs)),
                            learning_rate=float(proxy_d.get("learning_rate", base.proxy.learning_rate)),
                            batch_size=int(proxy_d.get("batch_size", base.proxy.batch_size)),
                            seed=int(proxy_d.get("seed", base.proxy.seed)))
        kept = d.get("kept_fraction")
        return ControlKnobs(
            forget_bound=_parse_bound(d.get("forget_bound", {}), f"{path}.forget_bound",
                                      base.forget_bound),
            retain_bound=_parse_bound(d.get("retain_bound", {}), f"{path}.retain_bound",
                                      base.retain_bound),
            noise=noise, proxy=proxy,
            gamma=float(d.get("gamma", base.gamma)),
            finetune=_parse_train(d.get("finetune", {}), f"{path}.finetune", base.finetune),
            prune_sparsity=float(d.get("prune_sparsity", base.prune_sparsity)),
            kept_fraction=None if kept is None else float(kept))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config dict (parsed JSON) with field-level error messages."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    _check_keys(raw, {"dataset", "forget", "arch", "original_training", "knobs",
                      "methods", "master_seed", "trials"}, "config")
    ds = _require(raw, "dataset", "config")
    _check_keys(ds, {"synthetic", "csv", "test", "standardize"}, "dataset")
    if ("synthetic" in ds) == ("csv" in ds):
        raise ConfigError("dataset: exactly one of 'synthetic' or 'csv' is required")
    if ds.get("synthetic") is not None:
        _check_keys(ds["synthetic"], {"n_samples", "n_features", "n_classes",
                                      "class_separation", "seed"}, "dataset.synthetic")
    if ds.get("csv") is not None:
        for key in ("path", "label_column", "n_classes"):
            _require(ds["csv"], key, "dataset.csv")
    test = _require(ds, "test", "dataset")
    _check_keys(test, {"holdout_fraction", "csv"}, "dataset.test")
    if ("holdout_fraction" in test) == ("csv" in test):
        raise ConfigError("dataset.test: exactly one of 'holdout_fraction' or 'csv' is required")
    holdout = test.get("holdout_fraction")
    if holdout is not None and not 0.0 < holdout < 1.0:
        raise ConfigError("dataset.test.holdout_fraction: must lie in (0, 1)")
    dataset = DatasetConfig(synthetic=ds.get("synthetic"), csv=ds.get("csv"),
                            test_csv=test.get("csv"), holdout_fraction=holdout,
                            standardize=bool(ds.get("standardize", False)))

    fg = raw.get("forget", {})
    _check_keys(fg, {"mode", "fraction", "target_class"}, "forget")
    mode = fg.get("mode", "random")
    if mode not in ("random", "class_wise"):
        raise ConfigError(f"forget.mode: must be 'random' or 'class_wise', got {mode!r}")
    if mode == "class_wise" and fg.get("target_class") is None:
        raise ConfigError("forget.target_class: required for class_wise mode")
    forget = ForgetConfig(mode, float(fg.get("fraction", 0.2)),
                          None if fg.get("target_class") is None
                          else int(fg["target_class"]))

    arch = raw.get("arch", {})
    _check_keys(arch, {"hidden", "activation"}, "arch")
    hidden = tuple(int(h) for h in arch.get("hidden", (32, 32)))
    if not hidden:
        raise ConfigError("arch.hidden: at least one hidden layer is required")

    methods = tuple(raw.get("methods", ["conmu", "finetune", "gradient_ascent"]))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"methods: unknown method {m!r} (choose from {list(METHODS)})")

    trials = int(raw.get("trials", 5))
    if trials < 1:
        raise ConfigError("trials: must be >= 1")

    return ExperimentConfig(
        dataset=dataset, forget=forget, hidden=hidden,
        activation=arch.get("activation", "relu"),
        original_training=_parse_train(raw.get("original_training", {}),
                                       "original_training", TrainConfig(epochs=20)),
        knobs=_parse_knobs(raw.get("knobs", {}), "knobs"),
        methods=methods, master_seed=int(raw.get("master_seed", 0)), trials=trials)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[float, ...]
    base: ExperimentConfig


def parse_sweep(raw: dict) -> SweepSpec:
    if not isinstance(raw, dict):
        raise ConfigError("sweep: top level must be a JSON object")
    _check_keys(raw, {"axis", "values", "base"}, "sweep")
    axis = _require(raw, "axis", "sweep")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep.axis: must be one of {list(SWEEP_AXES)}, got {axis!r}")
    values = tuple(float(v) for v in _require(raw, "values", "sweep"))
    if not values:
        raise ConfigError("sweep.values: must be non-empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep.values: must be strictly increasing")
    return SweepSpec(axis, values, parse_config(_require(raw, "base", "sweep")))


# ---------------------------------------------------------------------------
# data materialization


def build_datasets(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Materialize (training universe, test set) for one experiment."""
    ds = cfg.dataset
    if ds.synthetic is not None:
        s = ds.synthetic
        source = gen_synthetic(int(s.get("n_samples", 1000)),
                               int(s.get("n_features", 2)),
                               int(s.get("n_classes", 2)),
                               float(s.get("class_separation", 4.0)),
                               int(s.get("seed", 0)))
    else:
        c = ds.csv
        source = load_csv(c["path"], c["label_column"], int(c["n_classes"]))
    if ds.test_csv is not None:
        test = load_csv(ds.test_csv["path"], ds.test_csv["label_column"],
                        int(ds.test_csv["n_classes"]))
        train_set = source
    else:
        n_test = int(ds.holdout_fraction * source.n_samples)
        if n_test < 1 or n_test >= source.n_samples:
            raise ConfigError("dataset.test.holdout_fraction: leaves an empty train or test set")
        rng = np.random.default_rng(derive_seed(cfg.master_seed, "holdout"))
        order = rng.permutation(source.n_samples)
        test = source.subset(np.sort(order[:n_test]))
        train_set = source.subset(np.sort(order[n_test:]))
    if ds.standardize:
        train_set, stats = standardize_features(train_set)
        test, _ = standardize_features(test, stats)
    return train_set, test


def _make_split(cfg: ExperimentConfig, data: LabeledDataset, trial: int) -> ForgetSplit:
    seed = derive_seed(cfg.master_seed, "split", trial)
    if cfg.forget.mode == "random":
        return split_random_forget(data, cfg.forget.fraction, seed)
    return split_classwise_forget(data, cfg.forget.target_class,
                                  cfg.forget.fraction, seed)


# ---------------------------------------------------------------------------
# trial execution


@dataclass(frozen=True)
class TrialRow:
    method: str
    trial: int
    report: MetricsReport
    sizes: dict


def _trial_knobs(cfg: ExperimentConfig, trial: int) -> ControlKnobs:
    k = cfg.knobs
    m = cfg.master_seed
    return replace(
        k,
        noise=replace(k.noise, seed=derive_seed(m, "conmu", "noise", trial)),
        proxy=replace(k.proxy, seed=derive_seed(m, "conmu", "proxy", trial)),
        finetune=replace(k.finetune, seed=derive_seed(m, "conmu", "finetune", trial)))


def run_trial(cfg: ExperimentConfig, data: LabeledDataset, test: LabeledDataset,
              trial: int) -> list[TrialRow]:
    """All requested methods for one trial, retrain reference included."""
    split = _make_split(cfg, data, trial)
    arch = mlp(data.n_features, cfg.hidden, data.n_classes, cfg.activation)

    seed_o = derive_seed(cfg.master_seed, "original", trial)
    cfg_o = replace(cfg.original_training, seed=seed_o)
    original = train(init_model(arch, seed_o), data, cfg_o)

    cfg_r = replace(cfg.original_training, seed=derive_seed(cfg.master_seed, "retrain", trial))
    t0 = time.perf_counter()
    retrained = retrain_baseline(arch, split.retain, cfg_r)
    wall_r = time.perf_counter() - t0
    work_r = method_work_units("retrain", split, cfg_r)
    reference = evaluate(retrained, split, test, train_mia(retrained, split.retain, test),
                         timing=(wall_r, work_r))
    base_sizes = {"forget": split.forget.n_samples, "retain": split.retain.n_samples}
    rows = [TrialRow("retrain", trial, reference, dict(base_sizes))]

    for method in cfg.methods:
        if method == "retrain":
            continue
        sizes = dict(base_sizes)
        if method == "conmu":
            run = conmu_unlearn(original, split, _trial_knobs(cfg, trial))
            model, wall, work = run.unlearned, run.wall_time_seconds, run.work_units
            sizes.update({"selected_forget": run.selected_forget_size,
                          "selected_retain": run.selected_retain_size,
                          "d_new": run.d_new_size})
        elif method == "finetune":
            sched = replace(cfg.knobs.finetune,
                            seed=derive_seed(cfg.master_seed, "finetune", trial))
            t0 = time.perf_counter()
            model = finetune_baseline(original, split.retain, sched)
            wall = time.perf_counter() - t0
            work = method_work_units(method, split, sched)
        else:  # gradient_ascent: mirrors the fine-tune schedule
            sched = replace(cfg.knobs.finetune,
                            seed=derive_seed(cfg.master_seed, "gradient_ascent", trial))
            t0 = time.perf_counter()
            model = gradient_ascent_baseline(original, split.forget, sched)
            wall = time.perf_counter() - t0
            work = method_work_units(method, split, sched)
        report = evaluate(model, split, test, train_mia(model, split.retain, test),
                          timing=(wall, work), reference=reference)
        rows.append(TrialRow(method, trial, report, sizes))
    return rows


def _trial_worker(args):
    cfg, data, test, trial = args
    return run_trial(cfg, data, test, trial)


@dataclass(frozen=True)
class ExperimentResults:
    config: ExperimentConfig
    rows: tuple[TrialRow, ...]
    backend: str

    def methods(self) -> list[str]:
        present = {r.method for r in self.rows}
        return [m for m in METHODS if m in present]

    def aggregates(self) -> dict:
        """Per-method mean and population std of each metric over trials."""
        out = {}
        for method in self.methods():
            metric_rows = [r.report.to_json_dict() for r in self.rows if r.method == method]
            agg = {}
            for key in METRIC_KEYS:
                vals = np.array([row[key] for row in metric_rows], dtype=np.float64)
                agg[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
            out[method] = agg
        return out

    def results_dict(self) -> dict:
        """Canonical payload: deterministic, wall-clock timings excluded."""
        rows = []
        for r in sorted(self.rows, key=lambda r: (r.trial, METHODS.index(r.method))):
            metrics = r.report.to_json_dict()
            metrics["rte_seconds"] = None  # recorded in the timing sidecar
            rows.append({"method": r.method, "trial": r.trial,
                         "metrics": metrics, "sizes": r.sizes})
        return {"schema": RESULTS_SCHEMA, "backend": self.backend,
                "master_seed": self.config.master_seed,
                "trials": self.config.trials,
                "methods": self.methods(), "rows": rows,
                "aggregates": self.aggregates()}

    def timings_dict(self) -> dict:
        return {"schema": RESULTS_SCHEMA + "-timings",
                "rte_seconds": {f"{r.method}/{r.trial}": r.report.rte_seconds
                                for r in self.rows}}

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["method", "trial", "ta", "fa", "ra", "mia", "frm", "work_units"])
        for r in sorted(self.rows, key=lambda r: (r.trial, METHODS.index(r.method))):
            m = r.report.to_json_dict()
            writer.writerow([r.method, r.trial] + [repr(m[k]) for k in
                            ("ta", "fa", "ra", "mia", "frm")] + [m["work_units"]])
        return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResults:
    """Train, unlearn and evaluate every requested method across all trials."""
    data, test = build_datasets(cfg)
    tasks = [(cfg, data, test, t) for t in range(cfg.trials)]
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_trial = list(pool.map(_trial_worker, tasks))
    else:
        per_trial = [_trial_worker(t) for t in tasks]
    rows = tuple(row for trial_rows in per_trial for row in trial_rows)
    return ExperimentResults(cfg, rows, _kernels.BACKEND)


# ---------------------------------------------------------------------------
# sweeps


def _override_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "alpha":
        return replace(cfg, knobs=replace(cfg.knobs,
                       noise=replace(cfg.knobs.noise, alpha=value)))
    if axis == "delta":
        if value != int(value):
            raise ConfigError(f"sweep.values: delta must be integral, got {value}")
        return replace(cfg, knobs=replace(cfg.knobs,
                       proxy=replace(cfg.knobs.proxy, delta_epochs=int(value))))
    if axis == "selection_fraction":
        return replace(cfg, knobs=replace(cfg.knobs, kept_fraction=value))
    raise ConfigError(f"unknown sweep axis {axis!r}")


SWEEP_AXIS_NOTES = {
    "selection_fraction": ("axis value = requested kept fraction; both selection bands are "
                           "widened symmetrically per trial until the kept fraction of each "
                           "pool reaches the value"),
    "alpha": "axis value = noise intensity multiplier",
    "delta": "axis value = proxy training epochs",
}


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[tuple[float, ExperimentResults]]:
    """One experiment per axis value, all other knobs fixed."""
    if "conmu" not in spec.base.methods:
        raise ConfigError("sweep.base.methods: sweeps ablate the pipeline; 'conmu' is required")
    out = []
    for value in spec.values:
        out.append((value, run_experiment(_override_axis(spec.base, spec.axis, value), jobs)))
    return out


def sweep_dict(spec: SweepSpec, points: list[tuple[float, ExperimentResults]]) -> dict:
    return {"schema": SWEEP_SCHEMA, "axis": spec.axis,
            "values": list(spec.values),
            "points": [{"axis_value": v, "results": res.results_dict()}
                       for v, res in points]}


def sweep_csv_text(spec: SweepSpec, points: list[tuple[float, ExperimentResults]]) -> str:
    """One row per axis value with the pipeline's mean metrics and sizes."""
    buf = io.StringIO()
    buf.write(f"# sweep axis {spec.axis}: {SWEEP_AXIS_NOTES[spec.axis]}\n")
    writer = csv.writer(buf)
    writer.writerow(["axis_value", "ta", "fa", "ra", "mia", "frm", "work_units",
                     "selected_forget", "selected_retain", "d_new"])
    for value, res in points:
        agg = res.aggregates()["conmu"]
        conmu_rows = [r for r in res.rows if r.method == "conmu"]
        sizes = {key: float(np.mean([r.sizes[key] for r in conmu_rows]))
                 for key in ("selected_forget", "selected_retain", "d_new")}
        writer.writerow([repr(float(value))]
                        + [repr(agg[k]["mean"]) for k in METRIC_KEYS]
                        + [repr(sizes["selected_forget"]), repr(sizes["selected_retain"]),
                           repr(sizes["d_new"])])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# report rendering


def load_results(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such results file: {path}")
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        raise ValueError(f"{path}: empty results file")
    try:
        results = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed results file ({exc})") from None
    if results.get("schema") != RESULTS_SCHEMA:
        raise ValueError(f"{path}: not a results file (schema {results.get('schema')!r})")
    if not results.get("rows"):
        raise ValueError(f"{path}: results file contains no runs")
    return results


def render_report(results: dict, timings: Optional[dict] = None) -> tuple[str, str]:
    """(human-readable table, machine CSV) for a results payload.

    Deltas against the retrain row follow the absolute-gap convention.
    """
    agg = results["aggregates"]
    if "retrain" not in agg:
        raise ValueError("results file lacks the retrain reference row")
    ref = agg["retrain"]
    rte_means = {}
    if timings:
        sums, counts = {}, {}
        for key, secs in timings.get("rte_seconds", {}).items():
            method = key.split("/")[0]
            if secs is not None:
                sums[method] = sums.get(method, 0.0) + secs
                counts[method] = counts.get(method, 0) + 1
        rte_means = {m: sums[m] / counts[m] for m in sums}

    methods = [m for m in METHODS if m in agg]
    header = (f"{'method':<16}{'TA%':>8}{'FA% (d)':>16}{'RA% (d)':>16}"
              f"{'MIA% (d)':>16}{'RTE(s)':>10}{'work':>10}{'FRM':>8}")
    lines = [header, "-" * len(header)]
    csv_buf = io.StringIO()
    writer = csv.writer(csv_buf)
    writer.writerow(["method", "ta_mean", "ta_std", "fa_mean", "fa_std", "ra_mean",
                     "ra_std", "mia_mean", "mia_std", "frm_mean", "frm_std",
                     "work_units_mean", "fa_delta", "ra_delta", "mia_delta"])
    for method in methods:
        a = agg[method]
        deltas = {k: abs(a[k]["mean"] - ref[k]["mean"]) for k in ("fa", "ra", "mia")}
        rte = f"{rte_means[method]:.2f}" if method in rte_means else "-"
        lines.append(
            f"{method:<16}{a['ta']['mean']:>8.2f}"
            f"{a['fa']['mean']:>9.2f} ({deltas['fa']:.2f})"
            f"{a['ra']['mean']:>9.2f} ({deltas['ra']:.2f})"
            f"{a['mia']['mean']:>9.2f} ({deltas['mia']:.2f})"
            f"{rte:>10}{a['work_units']['mean']:>10.0f}{a['frm']['mean']:>8.3f}")
        writer.writerow([method]
                        + [repr(a[k][s]) for k in ("ta", "fa", "ra", "mia", "frm")
                           for s in ("mean", "std")]
                        + [repr(a["work_units"]["mean"])]
                        + [repr(deltas[k]) for k in ("fa", "ra", "mia")])
    return "\n".join(lines), csv_buf.getvalue()


def recompute_frm(results: dict) -> dict:
    """Per-row recomputation of the composite score from its FA/RA/MIA columns."""
    by_trial_ref = {row["trial"]: row["metrics"] for row in results["rows"]
                    if row["method"] == "retrain"}
    out = {}
    for row in results["rows"]:
        m = row["metrics"]
        ref = by_trial_ref[row["trial"]]
        out[(row["method"], row["trial"])] = frm_score(
            (m["fa"], m["ra"], m["mia"]), (ref["fa"], ref["ra"], ref["mia"]))
    return out
