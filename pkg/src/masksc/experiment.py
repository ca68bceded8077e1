"""Multi-trial experiment runner behind the command line tool.

An experiment file is a JSON object.  Top-level keys:

``dataset``
    ``{"kind": "synthetic", "K", "r", "d", "n_per", "sigma", "shuffle"}``,
    ``{"kind": "idx", "images", "labels", "subsample", "name"}`` or
    ``{"kind": "csv", "path", "label_column", "name"}``.
``preprocess``
    ``{"normalize": true, "pca": null}``.
``model`` / ``models``
    one model name, or a list for comparisons.
``n_trials``, ``seed``, ``output_dir``, ``gmsc_prior``
    trial count, base seed (trial ``t`` uses ``seed + t``), where to write,
    and the prior mask for standalone GMSC (``"ones"`` or ``"bmsc"``).

Every other key is an :class:`ExperimentConfig` field.  ``p`` may be a list,
in which case each value is run and reported as its own row.
Randomized datasets (synthetic draws, IDX subsamples) are redrawn per trial
with the trial seed.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import os
import time
from typing import Any, Mapping

import numpy as np

from . import data_io
from .admm import solve
from .core import DATASET_LAMBDA, ExperimentConfig, Model
from .errors import ConfigError, InvalidInputError
from .metrics import bca, clustering_accuracy, nmi
from .rmsc import mask_from_labels, run_rmsc
from .spectral import spectral_clustering, symmetrize_affinity

RUNNER_KEYS = {"dataset", "preprocess", "model", "models", "n_trials", "seed",
               "output_dir", "gmsc_prior"}
CONFIG_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"model", "seed"}
DATASET_KEYS = {
    "synthetic": {"kind", "K", "r", "d", "n_per", "sigma", "shuffle", "name"},
    "idx": {"kind", "images", "labels", "subsample", "name"},
    "csv": {"kind", "path", "label_column", "name"},
}
SYNTHETIC_DEFAULTS = {"K": 5, "r": 3, "d": 30, "n_per": 40, "sigma": 0.01, "shuffle": True,
                      "name": "synthetic"}
MODEL_ORDER = [Model.BMSC, Model.GMSC, Model.GMSC_ROBUST, Model.RMSC_V1, Model.RMSC_V2]

# non-convergence is reported through this exit status by the CLI
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_NONCONVERGED = 0, 1, 2, 3


@dataclasses.dataclass
class TrialResult:
    trial: int
    seed: int
    model: str
    p: float
    accuracy: float
    nmi: float
    bca: float
    affinity_seconds: float
    clustering_seconds: float
    admm_iterations: int
    admm_converged: bool
    rmsc_iterations: int
    rmsc_converged: bool
    labels: np.ndarray = dataclasses.field(repr=False)
    truth: np.ndarray = dataclasses.field(repr=False)
    Z: np.ndarray = dataclasses.field(repr=False)

    @property
    def converged(self) -> bool:
        return self.admm_converged and self.rmsc_converged


@dataclasses.dataclass
class SummaryRow:
    model: str
    p: float
    n_trials: int
    accuracy: tuple[float, float]
    nmi: tuple[float, float]
    bca: tuple[float, float]
    affinity_seconds: tuple[float, float]
    clustering_seconds: tuple[float, float]


@dataclasses.dataclass
class ExperimentReport:
    config: dict
    trials: list[TrialResult]
    rows: list[SummaryRow]
    best_p: dict[str, float]
    output_dir: str | None

    @property
    def converged(self) -> bool:
        return all(t.converged for t in self.trials)

    def row(self, model, p=None) -> SummaryRow:
        model = Model(model).value if not isinstance(model, Model) else model.value
        for r in self.rows:
            if r.model == model and (p is None or r.p == p):
                return r
        raise KeyError(model)


# --- configuration ---------------------------------------------------------

def _load_config(source) -> dict:
    if isinstance(source, Mapping):
        return copy.deepcopy(dict(source))
    with open(source) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    return data


def apply_overrides(config: dict, overrides: Mapping[str, Any]) -> dict:
    """Set dotted keys (``dataset.sigma``) on a copy of ``config``."""
    out = copy.deepcopy(config)
    for key, value in overrides.items():
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}: {part} is not an object", [key])
        node[parts[-1]] = value
    return out


def resolve_config(source, overrides: Mapping[str, Any] | None = None) -> dict:
    """Fill defaults and validate; the result fully determines a run."""
    raw = apply_overrides(_load_config(source), overrides or {})
    unknown = sorted(set(raw) - RUNNER_KEYS - CONFIG_KEYS)
    if unknown:
        raise ConfigError("unknown configuration keys", unknown)
    bad = []

    ds = raw.get("dataset")
    if not isinstance(ds, dict) or ds.get("kind") not in DATASET_KEYS:
        raise ConfigError("dataset.kind must be one of synthetic, idx, csv", ["dataset.kind"])
    kind = ds["kind"]
    extra = sorted(set(ds) - DATASET_KEYS[kind])
    if extra:
        raise ConfigError(f"unknown keys for a {kind} dataset", [f"dataset.{k}" for k in extra])
    if kind == "synthetic":
        ds = {**SYNTHETIC_DEFAULTS, **ds}
    elif kind == "idx":
        ds = {"subsample": None, "name": "mnist", **ds}
        bad += [f"dataset.{k}" for k in ("images", "labels") if not isinstance(ds.get(k), str)]
    else:
        ds = {"label_column": -1, "name": None, **ds}
        if not isinstance(ds.get("path"), str):
            bad.append("dataset.path")
        if ds["name"] is None:
            ds["name"] = os.path.splitext(os.path.basename(str(ds.get("path"))))[0]

    pre = {"normalize": True, "pca": None, **(raw.get("preprocess") or {})}
    if set(pre) - {"normalize", "pca"}:
        bad += [f"preprocess.{k}" for k in sorted(set(pre) - {"normalize", "pca"})]

    if "models" in raw and "model" in raw:
        bad.append("model")
    models = raw.get("models", [raw.get("model", "BMSC")])
    if isinstance(models, str):
        models = [models]
    try:
        models = [Model(str(m).upper().replace("-", "_")).value for m in models]
    except ValueError:
        bad.append("models" if "models" in raw else "model")
        models = []

    n_trials = raw.get("n_trials", 1)
    if not (isinstance(n_trials, int) and n_trials >= 1):
        bad.append("n_trials")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        bad.append("seed")
    prior = raw.get("gmsc_prior", "ones")
    if prior not in ("ones", "bmsc"):
        bad.append("gmsc_prior")
    if bad:
        raise ConfigError("invalid configuration", bad)

    params = {k: raw[k] for k in CONFIG_KEYS if k in raw}
    if params.get("n_clusters") is None:
        params.pop("n_clusters", None)
    name = str(ds.get("name") or "").lower()
    params.setdefault("lam", DATASET_LAMBDA.get(name, ExperimentConfig.lam))
    p_values = params.pop("p", ExperimentConfig.p)
    p_values = list(p_values) if isinstance(p_values, (list, tuple)) else [p_values]
    if not p_values:
        raise ConfigError("p grid is empty", ["p"])
    if kind == "synthetic":
        params.setdefault("n_clusters", ds["K"])
    # validate parameter values against the dataclass now, not mid-run
    for m in models:
        for p in p_values:
            try:
                ExperimentConfig(model=m, p=p, seed=seed, **{"n_clusters": 2, **params})
            except TypeError as exc:
                raise ConfigError(str(exc)) from None
    full = {f.name: getattr(ExperimentConfig, f.name) for f in dataclasses.fields(ExperimentConfig)
            if f.name not in ("model", "seed", "p")}
    full.update(params)
    # None means "number of ground-truth classes in the dataset"
    full["n_clusters"] = params.get("n_clusters")
    full["p"] = p_values if len(p_values) > 1 else p_values[0]
    return {
        "dataset": ds,
        "preprocess": pre,
        "models": models,
        "n_trials": n_trials,
        "seed": seed,
        "gmsc_prior": prior,
        "output_dir": raw.get("output_dir"),
        **dict(sorted(full.items())),
    }


def provenance(config: dict) -> dict:
    """Resolved config without the output location (it does not affect results)."""
    return {k: v for k, v in config.items() if k != "output_dir"}


# --- execution -------------------------------------------------------------

def load_dataset(spec: Mapping[str, Any], seed: int) -> data_io.Dataset:
    kind = spec["kind"]
    if kind == "synthetic":
        return data_io.generate_synthetic_subspaces(
            spec["K"], spec["r"], spec["d"], spec["n_per"], spec["sigma"], seed=seed,
            shuffle=spec["shuffle"])
    if kind == "idx":
        return data_io.load_idx(spec["images"], spec["labels"], spec["subsample"], seed=seed,
                                name=spec["name"])
    return data_io.load_csv(spec["path"], spec["label_column"], name=spec["name"])


def run_model(X, config: ExperimentConfig, gmsc_prior: str = "ones"):
    """One end-to-end fit: returns ``(labels, Z, info)``.

    ``info`` carries timings split into affinity computation and clustering,
    plus convergence flags.
    """
    K = config.n_clusters
    info = {"affinity_seconds": 0.0, "clustering_seconds": 0.0, "admm_iterations": 0,
            "admm_converged": True, "rmsc_iterations": 0, "rmsc_converged": True}
    if config.model.is_recursive:
        t0 = time.perf_counter()
        res = run_rmsc(X, config)
        total = time.perf_counter() - t0
        clus = sum(h.clustering_seconds for h in res.history)
        info.update(affinity_seconds=total - clus, clustering_seconds=clus,
                    admm_iterations=sum(h.admm_iterations for h in res.history),
                    admm_converged=all(h.admm_converged for h in res.history),
                    rmsc_iterations=len(res.history), rmsc_converged=res.converged)
        return res.labels, res.Z, info

    t0 = time.perf_counter()
    mask = None
    if config.model is not Model.BMSC:
        if gmsc_prior == "bmsc":
            prior = solve(X, config.replace(model=Model.BMSC))
            prior_labels = spectral_clustering(prior.Z, K, config.seed, config.kmeans_restarts)
            mask = mask_from_labels(prior_labels, config.beta, config.invert_mask)
        else:
            mask = np.ones((X.shape[1], X.shape[1]))
    res = solve(X, config, mask)
    t1 = time.perf_counter()
    labels = spectral_clustering(res.Z, K, config.seed, config.kmeans_restarts)
    t2 = time.perf_counter()
    info.update(affinity_seconds=t1 - t0, clustering_seconds=t2 - t1,
                admm_iterations=res.iterations, admm_converged=res.converged)
    return labels, res.Z, info


def experiment_config(config: dict, model: str, p: float, seed: int, K: int) -> ExperimentConfig:
    params = {k: config[k] for k in CONFIG_KEYS if k != "p"}
    params["n_clusters"] = config.get("n_clusters") or K
    return ExperimentConfig(model=model, p=p, seed=seed, **params)


def run_trials(config: dict) -> list[TrialResult]:
    p_values = config["p"] if isinstance(config["p"], list) else [config["p"]]
    results = []
    for t in range(config["n_trials"]):
        seed = config["seed"] + t
        ds = data_io.preprocess(load_dataset(config["dataset"], seed),
                                normalize=config["preprocess"]["normalize"],
                                pca=config["preprocess"]["pca"])
        for model in config["models"]:
            for p in p_values:
                cfg = experiment_config(config, model, p, seed, ds.K)
                labels, Z, info = run_model(ds.X, cfg, config["gmsc_prior"])
                results.append(TrialResult(
                    trial=t, seed=seed, model=model, p=p,
                    accuracy=clustering_accuracy(labels, ds.truth),
                    nmi=nmi(labels, ds.truth), bca=bca(labels, ds.truth),
                    labels=labels, truth=ds.truth, Z=Z, **info))
    return results


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def summarize(trials: list[TrialResult]) -> tuple[list[SummaryRow], dict[str, float]]:
    groups: dict[tuple[str, float], list[TrialResult]] = {}
    for t in trials:
        groups.setdefault((t.model, t.p), []).append(t)
    order = {m.value: i for i, m in enumerate(MODEL_ORDER)}
    rows = []
    for (model, p), ts in sorted(groups.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])):
        rows.append(SummaryRow(
            model=model, p=p, n_trials=len(ts),
            accuracy=_mean_std([t.accuracy for t in ts]),
            nmi=_mean_std([t.nmi for t in ts]),
            bca=_mean_std([t.bca for t in ts]),
            affinity_seconds=_mean_std([t.affinity_seconds for t in ts]),
            clustering_seconds=_mean_std([t.clustering_seconds for t in ts]),
        ))
    best: dict[str, SummaryRow] = {}
    for r in rows:
        if r.model not in best or r.accuracy[0] > best[r.model].accuracy[0]:
            best[r.model] = r
    return rows, {m: r.p for m, r in best.items()}


# --- output ----------------------------------------------------------------

TRIAL_FIELDS = ["trial", "seed", "model", "p", "accuracy", "nmi", "bca", "admm_iterations",
                "admm_converged", "rmsc_iterations", "rmsc_converged"]
TIMING_FIELDS = ["trial", "seed", "model", "p", "affinity_seconds", "clustering_seconds"]


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(fields, trials, header_comment: str) -> str:
    buf = io.StringIO()
    buf.write(header_comment)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for t in sorted(trials, key=lambda t: (t.trial, MODEL_ORDER.index(Model(t.model)), t.p)):
        w.writerow([_cell(getattr(t, f)) for f in fields])
    return buf.getvalue()


def _label(row: SummaryRow, multi_p: bool) -> str:
    name = row.model.replace("_V", "-v").replace("_ROBUST", "-robust")
    return f"{name} (p={row.p:g})" if multi_p else name


def format_table(rows: list[SummaryRow], multi_p: bool = False) -> str:
    """Aligned text table with ``mean ± std`` cells (percent for scores)."""
    head = ["Models", "Accuracy (%)", "NMI (%)", "BCA (%)", "Time (s)", "Clustering (s)"]
    body = []
    for r in rows:
        pct = lambda ms: f"{100 * ms[0]:.2f} ± {100 * ms[1]:.2f}"
        sec = lambda ms: f"{ms[0]:.2f} ± {ms[1]:.2f}"
        body.append([_label(r, multi_p), pct(r.accuracy), pct(r.nmi), pct(r.bca),
                     sec(r.affinity_seconds), sec(r.clustering_seconds)])
    widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
    fmt = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(b) for b in body]
    return "\n".join(lines) + "\n"


def rows_csv(rows: list[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "p", "n_trials", "accuracy_mean", "accuracy_std", "nmi_mean", "nmi_std",
                "bca_mean", "bca_std", "affinity_seconds_mean", "affinity_seconds_std"])
    for r in rows:
        w.writerow([r.model, repr(float(r.p)), r.n_trials, *map(repr, r.accuracy), *map(repr, r.nmi),
                    *map(repr, r.bca), *map(repr, r.affinity_seconds)])
    return buf.getvalue()


def write_outputs(report: ExperimentReport, out: str, table_name: str = "summary") -> None:
    os.makedirs(out, exist_ok=True)
    prov = json.dumps(provenance(report.config), sort_keys=True, separators=(",", ":"))
    comment = f"# resolved_config: {prov}\n"
    with open(os.path.join(out, "config.resolved.json"), "w") as fh:
        json.dump(provenance(report.config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "trials.csv"), "w", newline="") as fh:
        fh.write(_csv_text(TRIAL_FIELDS, report.trials, comment))
    with open(os.path.join(out, "timings.csv"), "w", newline="") as fh:
        fh.write(_csv_text(TIMING_FIELDS, report.trials, comment))
    multi_p = isinstance(report.config["p"], list)
    with open(os.path.join(out, f"{table_name}.txt"), "w") as fh:
        fh.write(f"dataset: {report.config['dataset']['name']}  trials: {report.config['n_trials']}  "
                 f"invert_mask: {str(report.config['invert_mask']).lower()}\n\n")
        fh.write(format_table(report.rows, multi_p))
        if multi_p:
            fh.write("\nbest p: " + ", ".join(f"{m}={p:g}" for m, p in report.best_p.items()) + "\n")
    with open(os.path.join(out, f"{table_name}.csv"), "w", newline="") as fh:
        fh.write(rows_csv(report.rows))
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump({"config": provenance(report.config), "best_p": report.best_p,
                   "converged": report.converged,
                   "rows": [dataclasses.asdict(r) for r in report.rows]}, fh, indent=2)
        fh.write("\n")
    last = max(t.trial for t in report.trials)
    for t in report.trials:
        if t.trial != last:
            continue
        stem = t.model if not multi_p else f"{t.model}_p{t.p:g}"
        data_io.save_affinity(t.Z, os.path.join(out, f"affinity_{stem}.mscz"))
        data_io.render_heatmap(t.Z, os.path.join(out, f"heatmap_{stem}.pgm"), order=t.truth)
        with open(os.path.join(out, f"labels_{stem}.csv"), "w") as fh:
            fh.write("predicted,truth\n")
            fh.writelines(f"{a},{b}\n" for a, b in zip(t.labels, t.truth))


def run_experiment(source, overrides: Mapping[str, Any] | None = None,
                   output_dir: str | None = None, table_name: str = "summary") -> ExperimentReport:
    """Run every configured model for ``n_trials`` trials and write the artifacts."""
    config = resolve_config(source, overrides)
    if output_dir is not None:
        config["output_dir"] = output_dir
    trials = run_trials(config)
    rows, best = summarize(trials)
    report = ExperimentReport(config=config, trials=trials, rows=rows, best_p=best,
                              output_dir=config["output_dir"])
    if config["output_dir"]:
        write_outputs(report, config["output_dir"], table_name)
    return report


def compare_models(source, overrides: Mapping[str, Any] | None = None,
                   output_dir: str | None = None) -> ExperimentReport:
    """Same as :func:`run_experiment` over ``models`` (default: the four reported models).

    A single ``model`` key is ignored here.
    """
    config = apply_overrides(_load_config(source), overrides or {})
    overrides = None
    config.pop("model", None)
    config.setdefault("models", ["BMSC", "GMSC", "RMSC_V1", "RMSC_V2"])
    return run_experiment(config, overrides, output_dir, table_name="compare")


def inspect_pairs(affinity, pairs) -> list[tuple[int, int, float]]:
    """``|phi(Z)_ij|`` for each requested pair; ``affinity`` is a matrix or MSCZ path."""
    Z = data_io.load_affinity(affinity) if isinstance(affinity, (str, os.PathLike)) else np.asarray(affinity)
    W = symmetrize_affinity(Z)
    n = W.shape[0]
    out = []
    for i, j in pairs:
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidInputError(f"pair ({i}, {j}) out of range for N={n}")
        out.append((int(i), int(j), float(W[i, j])))
    return out


def format_pairs(values) -> str:
    lines = ["pair      value"]
    lines += [f"({i},{j})".ljust(10) + f"{v:.4f}" for i, j, v in values]
    return "\n".join(lines) + "\n"
