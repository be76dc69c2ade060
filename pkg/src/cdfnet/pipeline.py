"""End-to-end experiment runs: sample, targets, train, fine-tune, evaluate.

Every run writes a manifest holding each parameter it used, including the
defaults the original experiments leave unstated, so a run can be repeated
from its manifest alone.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import distributions, kde, metrics, minn, targets, training

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
DEFAULTS_VERSION = 1

# Settings for both experiments. Sample sizes, hidden counts, batch size,
# epoch counts and fixed KDE bandwidths follow the reference experiments; the
# remaining values (M, margin, Adadelta constants, alpha0, grids) are our own.
DEFAULTS = {
    "version": DEFAULTS_VERSION,
    "bart": {
        "n": 1000, "hidden": 16, "epochs": 30000, "batch_size": 100,
        "estimator": "eq1", "m_per_point": 10, "margin": 0.1,
        "finetune_epochs": 0, "alpha0": 3.0, "kde_h": 0.05,
        "grid": [-4.0, 4.0, 4001],
    },
    "mixed": {
        "n": 2000, "hidden": 8, "epochs": 10000, "batch_size": 100,
        "estimator": "eq1", "m_per_point": 10, "margin": 0.1,
        "finetune_epochs": 5000, "alpha0": 3.0, "kde_h": 0.1,
        "grid": [-10.0, 10.0, 8001],
    },
    "adadelta": {"decay": 0.95, "eps": 1e-8, "loss_reduction": "sum"},
    "init_scale": 0.1,
    "kde_cv_candidates": kde.N_CANDIDATES,
}


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``kind`` is 'data' or 'numeric'."""

    def __init__(self, stage: str, message: str, kind: str = "data"):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.kind = kind


@dataclass
class ExperimentManifest:
    distribution: str
    seed: int
    n: int
    estimator: str
    m: int
    margin: float
    include_data_points: bool
    hidden: int
    init_scale: float
    train: dict
    finetune: Optional[dict]
    kde_h: str  # a float as text, or "cv"
    grid: list
    schema_version: int = MANIFEST_VERSION
    defaults_version: int = DEFAULTS_VERSION
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentManifest":
        doc = json.loads(text)
        if doc.get("schema_version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest schema version {doc.get('schema_version')!r}")
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


def make_manifest(name: str, seed: int, epochs: Optional[int] = None,
                  finetune_epochs: Optional[int] = None, kde_h=None) -> ExperimentManifest:
    """Manifest for one of the reference experiments; overrides shorten runs."""
    if name not in distributions.DISTRIBUTIONS:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(distributions.DISTRIBUTIONS)}")
    d = DEFAULTS[name]
    ada = DEFAULTS["adadelta"]
    train_cfg = {
        "epochs": int(epochs or d["epochs"]), "batch_size": d["batch_size"],
        "adadelta_decay": ada["decay"], "adadelta_eps": ada["eps"],
        "loss_reduction": ada["loss_reduction"], "seed": seed, "shuffle": True,
    }
    ft_epochs = d["finetune_epochs"] if finetune_epochs is None else finetune_epochs
    ft = None
    if ft_epochs:
        ft = {"alpha0": d["alpha0"], "config": {**train_cfg, "epochs": int(ft_epochs), "seed": seed + 1}}
    return ExperimentManifest(
        distribution=name, seed=seed, n=d["n"], estimator=d["estimator"],
        m=d["m_per_point"] * d["n"], margin=d["margin"], include_data_points=False,
        hidden=d["hidden"], init_scale=DEFAULTS["init_scale"], train=train_cfg, finetune=ft,
        kde_h=str(d["kde_h"] if kde_h is None else kde_h), grid=list(d["grid"]),
    )


def write_dataset(data: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x_{j + 1}" for j in range(data.shape[1])])
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def read_dataset(path) -> np.ndarray:
    try:
        rows = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise StageError("read", f"cannot read dataset {path}: {exc}") from exc
    try:
        return targets.as_dataset(rows)
    except ValueError as exc:
        raise StageError("read", f"invalid dataset {path}: {exc}") from exc


def make_targets(data: np.ndarray, estimator: str, m: int, margin: float, seed: int,
                 include_data_points: bool = False) -> targets.TargetSet:
    if estimator == "eq1":
        return targets.targets_uniform(data, m, margin, seed, include_data_points)
    if estimator == "eq2":
        return targets.targets_loo(data)
    raise ValueError(f"unknown target estimator {estimator!r}; use 'eq1' or 'eq2'")


def resolve_bandwidth(data: np.ndarray, kde_h: str) -> float:
    if kde_h == "cv":
        return kde.cv_bandwidth(data[:, 0])
    return float(kde_h)


def evaluate(model: minn.MinnModel, spec: distributions.MixtureSpec, data: np.ndarray,
             grid: metrics.Grid1D, bandwidth: float) -> tuple[dict, dict]:
    """Curves on the grid and the scalar metrics comparing them."""
    if model.d != 1 or data.shape[1] != 1:
        raise ValueError("evaluation against a 1-D ground truth needs a 1-D model and dataset")
    x = grid.points
    curves = {
        "x": x,
        "cdf_true": distributions.cdf_true(spec, x),
        "cdf_minn": minn.forward(model, x),
        "ecdf": targets.empirical_cdf(data, x),
        "pdf_true": distributions.pdf_true(spec, x),
        "pdf_minn": minn.pdf_at(model, x),
        "pdf_kde": kde.kde_pdf(kde.KdeModel(data[:, 0], bandwidth), x),
    }
    report = {
        "ise_minn": metrics.ise(curves["pdf_minn"], curves["pdf_true"], grid),
        "ise_kde": metrics.ise(curves["pdf_kde"], curves["pdf_true"], grid),
        "sup_cdf": metrics.sup_cdf_error(model, data, grid),
        "negative_mass": metrics.negative_mass(curves["pdf_minn"], grid),
        "kde_h": bandwidth,
    }
    return curves, report


def write_curves(curves: dict, path) -> None:
    cols = list(curves)
    table = np.column_stack([curves[c] for c in cols])
    if not np.all(np.isfinite(table)):
        raise ValueError("curves contain non-finite values")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


@contextmanager
def _stage(name: str):
    """Tag any failure inside the block with the stage name."""
    t0 = time.perf_counter()
    log.info("[%s] start", name)
    try:
        yield
    except StageError:
        raise
    except training.NumericalError as exc:
        raise StageError(name, str(exc), "numeric") from exc
    except (ValueError, OSError) as exc:
        raise StageError(name, str(exc), "data") from exc
    log.info("[%s] done in %.1fs", name, time.perf_counter() - t0)


def run_experiment(manifest: ExperimentManifest, outdir) -> dict:
    """Run every stage and write the artifact set into ``outdir``.

    Returns the metrics dictionary (also written to ``metrics.json``).
    """
    out = Path(outdir)
    with _stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        spec = distributions.by_name(manifest.distribution)
        grid = metrics.Grid1D(float(manifest.grid[0]), float(manifest.grid[1]), int(manifest.grid[2]))

    with _stage("sample"):
        data = distributions.sample(spec, manifest.n, manifest.seed)
        write_dataset(data, out / "data.csv")

    with _stage("targets"):
        tset = make_targets(data, manifest.estimator, manifest.m, manifest.margin,
                            manifest.seed, manifest.include_data_points)
        tset.to_csv(out / "targets.csv")

    with _stage("train"):
        model = minn.init(1, manifest.hidden, manifest.seed, manifest.init_scale, data=data)
        model, state = training.train(model, tset, training.TrainConfig(**manifest.train))
        minn.save(model, out / "model.json")
        training.write_loss_trace(state, out / "loss.csv")
    outputs = {"data": "data.csv", "targets": "targets.csv", "model": "model.json", "loss": "loss.csv"}

    with _stage("kde"):
        bandwidth = resolve_bandwidth(data, manifest.kde_h)

    with _stage("eval"):
        curves, report = evaluate(model, spec, data, grid, bandwidth)
        report["final_loss"] = state.loss_trace[-1]

    if manifest.finetune:
        with _stage("finetune"):
            ft = manifest.finetune
            tuned, ft_state = training.finetune(model, tset, training.TrainConfig(**ft["config"]), ft["alpha0"])
            minn.save(tuned, out / "model_finetuned.json")
            training.write_loss_trace(ft_state, out / "loss_finetune.csv")
        with _stage("eval"):
            write_curves(curves, out / "curves_pre_finetune.csv")
            pre = report
            curves, report = evaluate(tuned, spec, data, grid, bandwidth)
            report["final_loss"] = ft_state.loss_trace[-1]
            report["pre_finetune"] = pre
            report["rho"] = tuned.rho.tolist()
        outputs.update(model_finetuned="model_finetuned.json", loss_finetune="loss_finetune.csv",
                       curves_pre_finetune="curves_pre_finetune.csv")

    with _stage("write"):
        write_curves(curves, out / "curves.csv")
        write_json(report, out / "metrics.json")
        outputs.update(curves="curves.csv", metrics="metrics.json")
        manifest.outputs = outputs
        (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return report
