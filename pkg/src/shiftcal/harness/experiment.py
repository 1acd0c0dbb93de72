"""Experiment grids over datasets x losses x ensemble strategies x calibrators.

A plan is a JSON document::

    {
      "datasets": [
        {"name": "synth", "synth": {"class_count": 5, "mu": 2.5, "sigma_shift": [3.0]}},
        {"name": "mine", "files": {"id_calib": "c.jsonl", "id_test": "t.jsonl",
                                   "shifted_test": ["s.jsonl"], "ood_pool": "o.jsonl"},
         "members": [{...same keys...}, ...]}
      ],
      "losses": ["ce", "erls"],
      "calibrators": ["none", "TS", "TS+OOD", "EBS", "TS+DAC"],
      "ensembles": ["none", {"strategy": "pre", "pool_size": 3, "size": 3, "draws": 1}],
      "seeds": [0, 1],
      "bins": 15,
      "ood": {"ratio": 0.1},
      "dac_k": 10,
      "train": {"steps": 300, "lr": 0.5},
      "member_correlation": 0.5
    }

Synthetic datasets are regenerated per seed and, for every loss, a linear
softmax model is trained on a held-out synthetic training split; its logits
on the record embeddings replace the generator logits. File datasets carry
precomputed logits, so their loss dimension collapses to ``"precomputed"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..calibrators import make_calibrator
from ..dac import DEFAULT_K, DensityAwareCalibration
from ..data import CalibSet, EvalSet, Role, load_records
from ..ensemble import POST, PRE, CalibratedEnsemble, mean_probs, sample_member_combinations
from ..losses import LossSpec, train_linear
from ..metrics import DEFAULT_BINS, MetricReport, evaluate, softmax
from ..ood import OOD_METHODS, OodPolicy, make_ood_calibset
from .synth import SynthConfig, synth_generate, synth_members, synth_train_set

NONE = "none"
PRECOMPUTED = "precomputed"
METRIC_COLUMNS = ("ece", "brier", "nll", "balanced_accuracy")
ROW_COLUMNS = ("dataset", "split", "role", "loss", "calibrator", "strategy", "seed", "draw", "status", "error")


@dataclass(frozen=True)
class EnsembleSpec:
    strategy: str = NONE
    pool_size: int = 3
    size: int = 3
    draws: int = 1

    @classmethod
    def parse(cls, spec) -> "EnsembleSpec":
        if isinstance(spec, str):
            spec = {"strategy": spec}
        out = cls(**spec)
        if out.strategy not in (NONE, PRE, POST):
            raise ValueError(f"unknown ensemble strategy {out.strategy!r}")
        return out


@dataclass
class ExperimentPlan:
    datasets: list
    calibrators: list = field(default_factory=lambda: [NONE, "TS"])
    losses: list = field(default_factory=lambda: ["ce"])
    ensembles: list = field(default_factory=lambda: [EnsembleSpec()])
    seeds: list = field(default_factory=lambda: [0])
    bins: int = DEFAULT_BINS
    ood_ratio: float = 0.10
    ood_label: Optional[str] = None
    dac_k: int = DEFAULT_K
    train_steps: int = 300
    train_lr: float = 0.5
    member_correlation: float = 0.5

    def __post_init__(self):
        self.ensembles = [EnsembleSpec.parse(e) if not isinstance(e, EnsembleSpec) else e for e in self.ensembles]
        self.losses = [LossSpec(x) if not isinstance(x, LossSpec) else x for x in self.losses]
        if not (self.datasets and self.calibrators and self.losses and self.ensembles and self.seeds):
            raise ValueError("experiment plan grid is empty")
        for name in self.calibrators:
            parse_calibrator(name)

    @classmethod
    def from_dict(cls, d) -> "ExperimentPlan":
        ood = d.get("ood", {})
        train = d.get("train", {})
        return cls(
            datasets=d["datasets"],
            calibrators=d.get("calibrators", [NONE, "TS"]),
            losses=d.get("losses", ["ce"]),
            ensembles=d.get("ensembles", [NONE]),
            seeds=d.get("seeds", [0]),
            bins=d.get("bins", DEFAULT_BINS),
            ood_ratio=ood.get("ratio", 0.10),
            ood_label=ood.get("label"),
            dac_k=d.get("dac_k", DEFAULT_K),
            train_steps=train.get("steps", 300),
            train_lr=train.get("lr", 0.5),
            member_correlation=d.get("member_correlation", 0.5),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ResultRow:
    dataset: str
    split: str
    role: str
    loss: str
    calibrator: str
    strategy: str
    seed: int
    draw: int = 0
    status: str = "ok"
    error: str = ""
    report: Optional[MetricReport] = None

    def metrics(self):
        if self.report is None:
            return {k: math.nan for k in METRIC_COLUMNS}
        return self.report.to_dict()


def parse_calibrator(name):
    """Split ``"IRM+OOD+DAC"`` style names into ``(base, use_ood, use_dac)``."""
    parts = [p.strip() for p in str(name).split("+")]
    base, flags = parts[0], {p.upper() for p in parts[1:]}
    if flags - {"OOD", "DAC"}:
        raise ValueError(f"unknown calibrator modifier in {name!r}")
    use_ood = "OOD" in flags
    if base.upper() == "EBS":
        use_ood = True
    if base.upper() == NONE.upper():
        if flags:
            raise ValueError("'none' takes no modifiers")
        return NONE, False, False
    make_calibrator(base)
    if use_ood and base.upper() not in OOD_METHODS:
        raise ValueError(f"unknown method {base!r} for OOD exposure")
    return base, use_ood, "DAC" in flags


# -- data preparation ---------------------------------------------------------

@dataclass
class _Splits:
    calib: EvalSet
    tests: list  # ID_TEST first, then shifted splits
    ood: Optional[EvalSet]


def _load_file_splits(files) -> _Splits:
    calib = load_records(files["id_calib"], Role.ID_CALIB)
    tests = [load_records(files["id_test"], Role.ID_TEST)]
    shifted = files.get("shifted_test", [])
    if isinstance(shifted, str):
        shifted = [shifted]
    tests += [load_records(p, Role.SHIFTED_TEST) for p in shifted]
    ood = load_records(files["ood_pool"], Role.OOD_POOL) if files.get("ood_pool") else None
    return _Splits(calib, tests, ood)


def _from_sets(sets) -> _Splits:
    return _Splits(sets[0], list(sets[1:-1]), sets[-1])


def _relogit(s: EvalSet, model) -> EvalSet:
    return EvalSet.from_arrays(model.logits(s.embeddings), s.labels, s.role, s.name, s.embeddings)


def _train(plan, config, member, loss):
    x, y = synth_train_set(config, member)
    model, _ = train_linear(x, y, loss, plan.train_steps, plan.train_lr, seed=config.seed,
                            n_classes=config.class_count)
    return model


def _retrain(plan, config, splits: _Splits, member, loss) -> _Splits:
    model = _train(plan, config, member, loss)
    return _Splits(_relogit(splits.calib, model), [_relogit(t, model) for t in splits.tests],
                   _relogit(splits.ood, model))


# -- calibration cells ----------------------------------------------------------

def _calibset(plan, splits: _Splits, base, use_ood, seed):
    if not use_ood:
        return CalibSet.from_evalset(splits.calib)
    if splits.ood is None:
        raise ValueError("OOD exposure requested but the dataset has no OOD pool")
    mode = plan.ood_label or OOD_METHODS[base.upper()]
    return make_ood_calibset(splits.calib, splits.ood, OodPolicy(plan.ood_ratio, mode, seed))


def _single_model_predictor(plan, splits: _Splits, name, seed):
    base, use_ood, use_dac = parse_calibrator(name)
    if base == NONE:
        return lambda s: softmax(s.logits)
    calib = _calibset(plan, splits, base, use_ood, seed)
    cal = make_calibrator(base).fit(calib.logits, calib.targets)
    cal.ood_exposed_ = use_ood
    if not use_dac:
        return lambda s: cal.predict_proba(s.logits)
    ref = splits.calib
    if ref.embeddings is None:
        raise ValueError("DAC needs embeddings on the calibration split")
    dac = DensityAwareCalibration(cal, k=plan.dac_k).fit(ref.logits, ref.labels, ref.embeddings)
    return lambda s: dac.predict_proba(s.logits, s.embeddings)


def _ensemble_predictor(plan, members, name, order, seed):
    base, use_ood, use_dac = parse_calibrator(name)
    if use_dac:
        raise ValueError("DAC is only supported for single models")
    if base == NONE:
        return lambda idx: mean_probs([softmax(m.tests[idx].logits) for m in members])
    calibs = [_calibset(plan, m, base, use_ood, seed) for m in members]
    ens = CalibratedEnsemble(base, order).fit(calibs)
    return lambda idx: ens.predict_proba([m.tests[idx].logits for m in members])


# -- grid -----------------------------------------------------------------------

def _dataset_name(ds, i):
    return ds.get("name") or f"dataset{i}"


def _loss_names(plan, ds):
    return [l.name for l in plan.losses] if "synth" in ds else [PRECOMPUTED]


def _failed_rows(plan, ds_name, losses, seed, exc):
    rows = []
    for loss in losses:
        for ens in plan.ensembles:
            for cal in plan.calibrators:
                rows.append(ResultRow(ds_name, "*", "*", loss, cal, ens.strategy, seed, 0, "failed", str(exc)))
    return rows


def _cell_rows(plan, ds_name, tests, loss, cal_name, strategy, seed, draw, predict):
    rows = []
    try:
        probs = [predict(i) for i in range(len(tests))]
    except Exception as exc:  # one bad cell must not void the run
        return [ResultRow(ds_name, t.name, t.role.value, loss, cal_name, strategy, seed, draw, "failed", str(exc))
                for t in tests]
    for t, p in zip(tests, probs):
        try:
            report = evaluate(p, t.labels, plan.bins)
            rows.append(ResultRow(ds_name, t.name, t.role.value, loss, cal_name, strategy, seed, draw, report=report))
        except Exception as exc:
            rows.append(ResultRow(ds_name, t.name, t.role.value, loss, cal_name, strategy, seed, draw,
                                  "failed", str(exc)))
    return rows


def _run_dataset_seed(plan, ds, ds_name, seed):
    rows = []
    synth = "synth" in ds
    config = SynthConfig.from_dict({**ds["synth"], "seed": seed, "name": ds_name}) if synth else None
    need_pool = max([e.pool_size for e in plan.ensembles if e.strategy != NONE], default=0)

    single = _from_sets(synth_generate(config)) if synth else _load_file_splits(ds["files"])
    pool = []
    if need_pool:
        if synth:
            pool = [_from_sets(m) for m in synth_members(config, need_pool, plan.member_correlation)]
        else:
            pool = [_load_file_splits(f) for f in ds.get("members", [])]

    for loss in plan.losses if synth else [None]:
        loss_name = loss.name if loss is not None else PRECOMPUTED
        try:
            model_splits = _retrain(plan, config, single, 0, loss) if synth else single
            model_pool = [_retrain(plan, config, p, m, loss) for m, p in enumerate(pool)] if synth else pool
        except Exception as exc:
            rows += _failed_rows(plan, ds_name, [loss_name], seed, exc)
            continue
        for ens in plan.ensembles:
            if ens.strategy == NONE:
                tests = model_splits.tests
                for cal in plan.calibrators:
                    try:
                        fn = _single_model_predictor(plan, model_splits, cal, seed)
                        predict = lambda i, fn=fn: fn(tests[i])
                    except Exception as exc:
                        predict = _raiser(exc)
                    rows += _cell_rows(plan, ds_name, tests, loss_name, cal, ens.strategy, seed, 0, predict)
                continue
            try:
                if len(model_pool) < ens.pool_size:
                    raise ValueError(f"ensemble pool needs {ens.pool_size} members, dataset has {len(model_pool)}")
                combos = sample_member_combinations(ens.pool_size, ens.size, ens.draws, seed)
            except Exception as exc:
                for cal in plan.calibrators:
                    rows += _cell_rows(plan, ds_name, model_splits.tests, loss_name, cal, ens.strategy, seed, 0,
                                       _raiser(exc))
                continue
            for draw, combo in enumerate(combos):
                members = [model_pool[i] for i in combo]
                tests = members[0].tests
                for cal in plan.calibrators:
                    try:
                        predict = _ensemble_predictor(plan, members, cal, ens.strategy, seed)
                    except Exception as exc:
                        predict = _raiser(exc)
                    rows += _cell_rows(plan, ds_name, tests, loss_name, cal, ens.strategy, seed, draw, predict)
    return rows


def _raiser(exc):
    def predict(_):
        raise exc
    return predict


def run_experiment(plan: ExperimentPlan):
    """Run every grid cell; failures are recorded per row and the run continues."""
    rows = []
    for i, ds in enumerate(plan.datasets):
        ds_name = _dataset_name(ds, i)
        for seed in plan.seeds:
            try:
                rows += _run_dataset_seed(plan, ds, ds_name, seed)
            except Exception as exc:
                rows += _failed_rows(plan, ds_name, _loss_names(plan, ds), seed, exc)
    return rows


# -- reports --------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_COLUMNS + METRIC_COLUMNS)
    for r in rows:
        m = r.metrics()
        writer.writerow([_fmt(getattr(r, c)) for c in ROW_COLUMNS] + [_fmt(float(m[c])) for c in METRIC_COLUMNS])
    return buf.getvalue()


def read_results_csv(path):
    """Parse a results CSV back into dicts; metric columns become floats (NaN when empty)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        out = []
        for rec in csv.DictReader(fh):
            for c in METRIC_COLUMNS:
                rec[c] = float(rec[c]) if rec[c] != "" else math.nan
            rec["seed"] = int(rec["seed"])
            rec["draw"] = int(rec["draw"])
            out.append(rec)
        return out


def _json_float(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)


def rows_to_json(rows) -> str:
    docs = []
    for r in rows:
        d = {c: getattr(r, c) for c in ROW_COLUMNS}
        d["metrics"] = {k: _json_float(v) for k, v in r.metrics().items()}
        if r.report is not None:
            t = r.report.reliability
            d["reliability"] = {
                "bin_lo": t.bin_lo.tolist(), "bin_hi": t.bin_hi.tolist(), "count": t.count.tolist(),
                "conf": [_json_float(x) for x in t.conf], "acc": [_json_float(x) for x in t.acc],
            }
        docs.append(d)
    return json.dumps(docs, indent=1, sort_keys=True) + "\n"


def scatter_rows(rows):
    """ID metric vs mean shifted metric per (dataset, loss, calibrator, strategy, seed); draws are averaged."""
    groups = OrderedDict()
    for r in rows:
        key = (r.dataset, r.loss, r.calibrator, r.strategy, r.seed)
        g = groups.setdefault(key, {"id": [], "shifted": [], "failed": False})
        if r.status != "ok":
            g["failed"] = True
            continue
        if r.role == Role.ID_TEST.value:
            g["id"].append(r.metrics())
        elif r.role == Role.SHIFTED_TEST.value:
            g["shifted"].append(r.metrics())
    out = []
    for key, g in groups.items():
        rec = dict(zip(("dataset", "loss", "calibrator", "strategy", "seed"), key))
        for metric in ("ece", "brier"):
            rec[f"id_{metric}"] = math.fsum(m[metric] for m in g["id"]) / len(g["id"]) if g["id"] else math.nan
            rec[f"shifted_{metric}"] = (math.fsum(m[metric] for m in g["shifted"]) / len(g["shifted"])
                                        if g["shifted"] else math.nan)
        rec["status"] = "failed" if g["failed"] else "ok"
        out.append(rec)
    return out


SCATTER_COLUMNS = ("dataset", "loss", "calibrator", "strategy", "seed", "status",
                   "id_ece", "shifted_ece", "id_brier", "shifted_brier")


def scatter_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCATTER_COLUMNS)
    for rec in scatter_rows(rows):
        writer.writerow([_fmt(rec[c]) for c in SCATTER_COLUMNS])
    return buf.getvalue()


def emit_report(rows, out_dir, formats=("csv", "json", "scatter")):
    """Write ``results.csv``, ``results.json`` and ``scatter.csv``; returns the written paths."""
    if not rows:
        raise ValueError("no result rows to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writers = {
        "csv": ("results.csv", rows_to_csv),
        "json": ("results.json", rows_to_json),
        "scatter": ("scatter.csv", scatter_to_csv),
    }
    paths = []
    for fmt in formats:
        fname, fn = writers[fmt]
        path = out / fname
        path.write_text(fn(rows), encoding="utf-8")
        paths.append(path)
    return paths


def treatment_matrix(records, metric="ece", split_kind="shifted", losses=None, calibrators=None, strategies=None):
    """Blocks x treatments matrix from parsed result rows for the rank tests.

    Blocks are ``(dataset, seed)``; treatments are ``loss/calibrator/strategy``.
    Shifted splits and ensemble draws are averaged per block. Blocks missing
    any treatment are dropped.
    """
    role = Role.SHIFTED_TEST.value if split_kind == "shifted" else Role.ID_TEST.value
    cells = OrderedDict()
    treatments = []
    for rec in records:
        if rec["status"] != "ok" or rec["role"] != role:
            continue
        if (losses and rec["loss"] not in losses) or (calibrators and rec["calibrator"] not in calibrators) \
                or (strategies and rec["strategy"] not in strategies):
            continue
        t = f"{rec['loss']}/{rec['calibrator']}/{rec['strategy']}"
        if t not in treatments:
            treatments.append(t)
        cells.setdefault((rec["dataset"], rec["seed"]), {}).setdefault(t, []).append(rec[metric])
    blocks, matrix = [], []
    for key, per_t in cells.items():
        if all(t in per_t for t in treatments):
            blocks.append(key)
            matrix.append([math.fsum(per_t[t]) / len(per_t[t]) for t in treatments])
    return np.asarray(matrix, dtype=np.float64).reshape(len(blocks), len(treatments)), blocks, treatments
