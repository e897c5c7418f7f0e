"""Experiment configurations, the extrapolation pipeline and its file outputs.

A run proceeds in phases: generate data from a problem adapter (or read a
user dataset), fit hyperparameters by maximum likelihood, predict the h = 0
limit on the query set, score the prediction against the truth when one is
known, and compute the classical extrapolation baselines on the same data.
"""

from __future__ import annotations

import csv
import inspect
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import classical, dataset, metrics, posterior
from .exceptions import BBPNError
from .kernel import BasisSet, Prior, Profile
from .likelihood import FitConfig, fit
from .problems import make_adapter

log = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"

PHASES = ("generate", "fit", "predict", "metrics", "baselines", "emit")


class ExperimentError(BBPNError):
    """A pipeline phase failed; ``partial`` holds whatever was computed before."""

    def __init__(self, phase, cause, partial=None):
        super().__init__(f"{phase} phase failed: {cause}")
        self.phase = phase
        self.cause = cause
        self.partial = partial


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    problem: Optional[str] = None
    problem_params: dict = field(default_factory=dict)
    h_grid: Optional[tuple] = None
    cumulative: bool = False
    kernel: str = "matern12"
    basis_v: int = 1
    center_on_finest: bool = False
    fit: FitConfig = field(default_factory=FitConfig)
    query: Optional[tuple] = None
    baseline_alpha: Optional[float] = None
    central_mass: float = 0.95
    band_sigmas: float = 2.0
    plots: bool = True
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        Profile(self.kernel)
        if self.basis_v < 0:
            raise ValueError("basis_v must be non-negative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.h_grid is not None:
            h = [float(x) for x in self.h_grid]
            if any(not x > 0 for x in h) or any(a <= b for a, b in zip(h, h[1:])):
                raise ValueError("h_grid must be strictly decreasing and positive")

    @property
    def profile(self):
        return Profile(self.kernel)

    def prior(self, p):
        basis = BasisSet.polynomial(self.basis_v) if self.basis_v else BasisSet.empty()
        return Prior.default(p, basis, self.profile)

    def with_overrides(self, **kw):
        """Copy with top-level fields or fit fields (prefixed ``fit_``) replaced."""
        fit_kw = {k[4:]: v for k, v in kw.items() if k.startswith("fit_") and v is not None}
        top = {k: v for k, v in kw.items() if not k.startswith("fit_") and v is not None}
        if "seed" in top:
            fit_kw.setdefault("seed", top["seed"])
        cfg = replace(self, **top)
        if fit_kw:
            cfg = replace(cfg, fit=replace(cfg.fit, **fit_kw))
        return cfg

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        model = raw.pop("model", {})
        fit_raw = dict(raw.pop("fit", {}))
        output = raw.pop("output", {})
        calib = raw.pop("calibration", {})
        kw = {**raw, **model, **output}
        if "repetitions" in calib:
            kw["repetitions"] = calib["repetitions"]
        if "bounds" in fit_raw:
            fit_raw["bounds"] = {k: tuple(v) for k, v in fit_raw["bounds"].items()}
        if "seed" in kw:
            fit_raw.setdefault("seed", kw["seed"])
        known = {f.name for f in fields(cls)}
        unknown = set(kw) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        for key in ("h_grid", "query"):
            if kw.get(key) is not None:
                kw[key] = tuple(tuple(x) if isinstance(x, list) else x for x in kw[key])
        return cls(fit=FitConfig(**fit_raw), **kw)

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


def load_config(name_or_path):
    """Load a config from a path, or by name from the bundled config directory."""
    path = Path(name_or_path)
    if not path.exists():
        path = CONFIG_DIR / f"{name_or_path}.toml"
    if not path.exists():
        raise FileNotFoundError(f"no config file or bundled config named {name_or_path!r}")
    return ExperimentConfig.from_toml(path)


def bundled_configs():
    return sorted(p.stem for p in CONFIG_DIR.glob("*.toml"))


@dataclass
class StageResult:
    """Outcome for one dataset (one stage of a cumulative study)."""

    h_finest: float
    data: dataset.Dataset
    fits: list = field(default_factory=list)
    posterior: Optional[posterior.LimitPosterior] = None
    truth: Optional[np.ndarray] = None
    report: Optional[metrics.CalibrationReport] = None
    finest: Optional[np.ndarray] = None
    baselines: dict = field(default_factory=dict)

    @property
    def alpha_ml(self):
        vals = [f.params.alpha for f in self.fits]
        return float(np.mean(vals)) if vals else float("nan")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    query: np.ndarray
    runs: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    failed_phase: Optional[str] = None
    error: Optional[str] = None

    @property
    def final(self):
        return self.stages[-1] if self.stages else None


def _adapter(config):
    params = dict(config.problem_params)
    factory_sig = inspect.signature(make_adapter_factory(config.problem))
    if config.h_grid is not None and "h_grid" in factory_sig.parameters:
        params["h_grid"] = tuple(config.h_grid)
    return make_adapter(config.problem, **params)


def make_adapter_factory(name):
    from .problems import REGISTRY

    if name not in REGISTRY:
        raise ValueError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[name]


def _rows_matching(data, t):
    return np.all(data.t == np.asarray(t, dtype=float), axis=1)


def _finest_values(data, query):
    """Values of the finest run at each query ordinate, or None if any is missing."""
    t_fin, q_fin = data.at_resolution(data.h_finest)
    out = []
    for t in query:
        hit = np.all(t_fin == t, axis=1)
        if not hit.any():
            return None
        out.append(q_fin[hit][0])
    return np.array(out)


def _centred(data):
    """Subtract the finest run from every run at matching ordinates."""
    t_fin, q_fin = data.at_resolution(data.h_finest)
    lookup = {tuple(t): q for t, q in zip(t_fin, q_fin)}
    pts = []
    for h, t, q in data.points():
        if t not in lookup:
            raise ValueError(f"ordinate {t} has no value in the finest run; cannot centre")
        pts.append((h, t, q - lookup[t]))
    return dataset.build(pts), lookup


def _fit_and_predict(data, query, config, state):
    """Fit, condition and predict; returns (fit results, limit posterior).

    With independent outputs the first ordinate coordinate selects a block,
    each block gets its own fit, and the block posteriors are combined.
    """
    if state.get("independent"):
        fits, posts, rows = [], [], []
        for comp in np.unique(query[:, 0]):
            sub = data.select(data.t[:, 0] == comp)
            sub = dataset.build([(h, t[1:], q) for h, t, q in sub.points()])
            mask = query[:, 0] == comp
            fr, post = _fit_and_predict(sub, query[mask][:, 1:], config, {})
            fits.extend(fr)
            posts.append(post)
            rows.append(np.flatnonzero(mask))
        stacked = posterior.stack_posteriors(posts)
        inv = np.argsort(np.concatenate(rows))
        post = posterior.LimitPosterior(
            query, stacked.mean[inv], stacked.covariance[np.ix_(inv, inv)]
        )
        return fits, post
    prior = config.prior(data.dim)
    state["phase"] = "fit"
    result = fit(data, config.fit, prior)
    if not math.isfinite(result.profile_log_likelihood):
        raise BBPNError("every optimizer restart failed")
    state["phase"] = "predict"
    model = posterior.condition(data, result.params, prior)
    return [result], posterior.predict_limit(model, query)


def _baselines(data, query, alpha):
    """Neville (polynomial) and Bulirsch-Stoer (rational) limits per query ordinate."""
    out = {"richardson": [], "bulirsch_stoer": []}
    for t in query:
        rows = _rows_matching(data, t)
        if rows.sum() < 2:
            out["richardson"].append(float("nan"))
            out["bulirsch_stoer"].append(float("nan"))
            continue
        seq = classical.ScalarSequence(data.h[rows], data.q[rows], alpha)
        out["richardson"].append(classical.neville_extrapolate(seq))
        try:
            out["bulirsch_stoer"].append(classical.bulirsch_stoer_extrapolate(seq))
        except BBPNError as exc:
            log.warning("rational extrapolation broke down at t=%s: %s", tuple(t), exc)
            out["bulirsch_stoer"].append(float("nan"))
    return {k: np.array(v) for k, v in out.items()}


def _stage_datasets(runs, cumulative):
    if cumulative:
        return [d for d in dataset.augment_cumulative(runs) if d.n >= 2]
    return [dataset.build([p for r in runs for p in r.points()])]


def analyse(runs, config, query, truth_fn=None, independent=False, result=None):
    """Run the fit/predict/score pipeline on a list of single-resolution runs."""
    result = result or ExperimentResult(config, query)
    query = np.asarray(query, dtype=float)
    alpha_b = config.baseline_alpha
    if alpha_b is None:
        alpha_b = 1.0 if (config.fit.learn_alpha or config.fit.stationary) else config.fit.alpha
    truth = None
    for data in _stage_datasets(runs, config.cumulative):
        stage = StageResult(h_finest=data.h_finest, data=data)
        result.stages.append(stage)
        state = {"phase": "fit", "independent": independent}
        try:
            work, lookup = (data, None)
            if config.center_on_finest:
                work, lookup = _centred(data)
            fits, post = _fit_and_predict(work, query, config, state)
            stage.fits.extend(fits)
            if lookup is not None:
                missing = [tuple(t) for t in query if tuple(t) not in lookup]
                if missing:
                    raise ValueError(f"query ordinates {missing[:3]} are absent from the finest run")
                base = np.array([lookup[tuple(t)] for t in query])
                post = posterior.LimitPosterior(post.query, post.mean + base, post.covariance)
            stage.posterior = post
            state["phase"] = "metrics"
            stage.finest = _finest_values(data, query)
            if truth_fn is not None:
                if truth is None:
                    truth = np.array([truth_fn(tuple(t)) for t in query])
                stage.truth = truth
                stage.report = metrics.calibration_report(post, truth, config.central_mass)
            state["phase"] = "baselines"
            stage.baselines = _baselines(data, query, alpha_b)
        except Exception as exc:
            result.failed_phase = state["phase"]
            result.error = f"{type(exc).__name__}: {exc}"
            raise ExperimentError(state["phase"], exc, result) from exc
    return result


def generate(config):
    """Instantiate the adapter and produce one dataset per resolution."""
    adapter = _adapter(config)
    h_grid = tuple(config.h_grid) if config.h_grid is not None else adapter.h_grid
    if not h_grid:
        raise ValueError("no resolutions given")
    runs = [dataset.build([(h, t, q) for t, q in adapter.run(h)]) for h in h_grid]
    return adapter, runs


def run_experiment(config):
    """Full pipeline for a problem-adapter experiment."""
    result = ExperimentResult(config, np.zeros((0, 0)))
    try:
        adapter, runs = generate(config)
    except Exception as exc:
        result.failed_phase, result.error = "generate", f"{type(exc).__name__}: {exc}"
        raise ExperimentError("generate", exc, result) from exc
    query = np.asarray(config.query if config.query is not None else adapter.query, dtype=float)
    if query.size != len(query) * adapter.dim:
        raise ValueError(f"query ordinates must have {adapter.dim} coordinate(s) for {adapter.name}")
    query = query.reshape(len(query), adapter.dim)
    result.query = query
    result.runs = runs
    result.meta = {"problem": adapter.name, "order_hint": adapter.order_hint, **adapter.meta}
    return analyse(runs, config, query, adapter.truth, adapter.independent_outputs, result)


def run_dataset(data, config, query=None):
    """Pipeline for a user-supplied dataset; the query defaults to all its ordinates."""
    if query is None:
        query = np.unique(data.t, axis=0) if data.dim else np.zeros((1, 0))
    query = np.asarray(query, dtype=float).reshape(-1, data.dim) if data.dim else np.zeros(
        (len(query), 0)
    )
    runs = [data.select(data.h == h) for h in data.resolutions]
    result = ExperimentResult(config, query, runs=runs, meta={"problem": "csv"})
    return analyse(runs, config, query, result=result)


def calibrate(config):
    """Repeat an experiment with seeds seed, seed+1, ... and collect S^2 per repetition.

    The repetition seed drives both the problem (when it takes a seed) and
    the optimizer's restart points.
    """
    takes_seed = "seed" in inspect.signature(make_adapter_factory(config.problem)).parameters
    rows = []
    results = []
    for r in range(config.repetitions):
        seed = config.seed + r
        params = dict(config.problem_params)
        if takes_seed:
            params["seed"] = seed
        cfg = replace(config, problem_params=params, fit=replace(config.fit, seed=seed))
        res = run_experiment(cfg)
        rep = res.final.report
        if rep is None:
            raise ValueError("calibration needs a problem with a known truth")
        rows.append({"repetition": r, "seed": seed, "W": rep.W, "S2": rep.S2,
                     "band_lower": rep.band_lower, "band_upper": rep.band_upper,
                     "inside": rep.inside_band})
        results.append(res)
    return rows, results


# ---------------------------------------------------------------- outputs


def _f(x):
    return "" if x is None else repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _tcols(d):
    return [f"t_{i + 1}" for i in range(d)]


RESULT_COLUMNS = ["experiment", "h_finest", "posterior_mean", "posterior_sd", "truth", "W", "S",
                  "S2_band_lo", "S2_band_hi", "alpha_ml", "baseline_richardson", "baseline_bs"]


def _result_rows(result):
    name = result.config.name
    rows = []
    for st in result.stages:
        if st.posterior is None:
            continue
        rep = st.report
        for k, t in enumerate(result.query):
            truth = st.truth[k] if st.truth is not None else None
            rows.append([
                name, _f(st.h_finest), *[_f(x) for x in t],
                _f(st.posterior.mean[k]), _f(st.posterior.sd[k]), _f(truth),
                _f(rep.W if rep else None), _f(rep.S if rep else None),
                _f(rep.band_lower if rep else None), _f(rep.band_upper if rep else None),
                _f(st.alpha_ml),
                _f(st.baselines["richardson"][k]) if st.baselines else "",
                _f(st.baselines["bulirsch_stoer"][k]) if st.baselines else "",
            ])
    return rows


def _comparison_rows(result):
    """One row per (method, h_finest): combined error W and max relative error."""
    rows = []
    for st in result.stages:
        if st.truth is None or st.posterior is None:
            continue
        estimates = {"finest_run": st.finest, "bbpn": st.posterior.mean, **st.baselines}
        for method, est in estimates.items():
            if est is None:
                continue
            err = est - st.truth
            W = float(np.linalg.norm(err))
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = float(np.max(np.abs(err / st.truth))) if np.all(st.truth != 0) else float("nan")
            S = st.report.S if method == "bbpn" else None
            rows.append([method, _f(st.h_finest), _f(W), _f(rel), _f(S)])
    return rows


def _plot_rows(result):
    rows = []
    for st in result.stages:
        if st.posterior is None:
            continue
        lo, hi = posterior.credible_band(st.posterior, result.config.band_sigmas)
        for k, t in enumerate(result.query):
            truth = st.truth[k] if st.truth is not None else None
            rows.append([_f(st.h_finest), *[_f(x) for x in t], _f(st.posterior.mean[k]),
                         _f(lo[k]), _f(hi[k]), _f(truth)])
    return rows


def _diagnostics(result):
    out = {
        "experiment": result.config.name,
        "meta": result.meta,
        "failed_phase": result.failed_phase,
        "error": result.error,
        "stages": [],
    }
    for st in result.stages:
        out["stages"].append({
            "h_finest": st.h_finest,
            "m": st.data.m,
            "n": st.data.n,
            "fits": [f.diagnostics() for f in st.fits],
            "report": None if st.report is None else {
                "W": st.report.W, "S": st.report.S, "S2": st.report.S2, "dof": st.report.dof,
                "band_lower": st.report.band_lower, "band_upper": st.report.band_upper,
                "inside_band": st.report.inside_band, "degraded": st.report.degraded,
            },
        })
    return out


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def emit_outputs(result, out_dir, plots=None):
    """Write CSV/JSON outputs (and figures) for ``result`` into ``out_dir``.

    Returns the list of written paths. A run that failed part-way still gets
    whatever was computed, plus a ``<name>.FAILED`` marker naming the phase.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = result.config.name
    d = result.query.shape[1] if result.query.ndim == 2 else 0
    written = []

    if result.runs:
        pooled = dataset.build([p for r in result.runs for p in r.points()])
        written.append(dataset.write_csv(pooled, out_dir / f"{name}_data.csv"))

    path = out_dir / f"{name}_results.csv"
    header = RESULT_COLUMNS[:2] + _tcols(d) + RESULT_COLUMNS[2:]
    _write_rows(path, header, _result_rows(result))
    written.append(path)

    path = out_dir / f"{name}_comparison.csv"
    _write_rows(path, ["method", "h_finest", "W", "max_rel_error", "S"], _comparison_rows(result))
    written.append(path)

    path = out_dir / f"{name}_plot.csv"
    _write_rows(path, ["h_finest", *_tcols(d), "mean", "lower", "upper", "truth"],
                _plot_rows(result))
    written.append(path)

    path = out_dir / f"{name}_fit.json"
    with open(path, "w") as fh:
        json.dump(_diagnostics(result), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    written.append(path)

    marker = out_dir / f"{name}.FAILED"
    if result.failed_phase:
        marker.write_text(f"phase: {result.failed_phase}\nerror: {result.error}\n")
        written.append(marker)
    elif marker.exists():
        marker.unlink()

    if plots if plots is not None else result.config.plots:
        from . import plotting

        written.extend(plotting.render_experiment(result, out_dir))
    return written


def emit_calibration(rows, config, out_dir, plots=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{config.name}_calibration.csv"
    header = ["repetition", "seed", "W", "S2", "band_lower", "band_upper", "inside"]
    _write_rows(path, header, [
        [r["repetition"], r["seed"], _f(r["W"]), _f(r["S2"]), _f(r["band_lower"]),
         _f(r["band_upper"]), int(r["inside"])] for r in rows
    ])
    written = [path]
    if plots if plots is not None else config.plots:
        from . import plotting

        written.append(plotting.render_calibration(rows, config, out_dir))
    return written
