"""Command line interface: ``shiftcal {gen,fit,apply,eval,grid,stats}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .calibrators import load_calibrator, make_calibrator, save_calibrator
from .dac import DEFAULT_K, DensityAwareCalibration
from .data import CalibSet, EvalSet, Role, load_records, save_records
from .ensemble import POST, PRE, CalibratedEnsemble
from .harness.experiment import (
    ExperimentPlan,
    emit_report,
    parse_calibrator,
    read_results_csv,
    run_experiment,
    treatment_matrix,
)
from .harness.stats import critical_difference, friedman_test, mean_ranks, nemenyi_test
from .harness.synth import SynthConfig, synth_generate, synth_members, synth_train_set
from .losses import DEFAULT_ALPHA, DEFAULT_LAMBDA, KINDS, LossSpec, train_linear
from .metrics import DEFAULT_BINS, evaluate, softmax
from .ood import DEFAULT_RATIO, OOD_METHODS, OodPolicy, make_ood_calibset


def _split_file_names(sets):
    names, j = [], 0
    for s in sets:
        if s.role is Role.SHIFTED_TEST:
            names.append(f"shifted_test_{j}.jsonl")
            j += 1
        else:
            names.append(f"{s.role.value}.jsonl")
    return names


def _write_sets(sets, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    for s, fname in zip(sets, _split_file_names(sets)):
        save_records(s, out_dir / fname)


def _relogit(sets, model):
    return [EvalSet.from_arrays(model.logits(s.embeddings), s.labels, s.role, s.name, s.embeddings) for s in sets]


def cmd_gen(args):
    base = SynthConfig.from_json(args.config).__dict__ if args.config else {}
    overrides = {
        "class_count": args.classes, "feature_dim": args.dim, "n_per_split": args.n, "n_ood": args.n_ood,
        "mu": args.mu, "sigma_id": args.sigma_id, "sigma_ood": args.sigma_ood, "seed": args.seed,
        "sigma_shift": tuple(args.sigma_shift) if args.sigma_shift else None,
    }
    config = SynthConfig.from_dict({**base, **{k: v for k, v in overrides.items() if v is not None}})
    out = Path(args.out)
    loss = LossSpec(args.loss, args.ls_lambda, args.er_alpha) if args.loss else None

    if args.members:
        for m, sets in enumerate(synth_members(config, args.members, args.member_correlation)):
            if loss is not None:
                x, y = synth_train_set(config, m)
                model, _ = train_linear(x, y, loss, args.steps, args.lr, config.seed, config.class_count)
                sets = _relogit(sets, model)
            _write_sets(sets, out / f"member{m}")
    else:
        sets = synth_generate(config)
        if loss is not None:
            x, y = synth_train_set(config)
            model, _ = train_linear(x, y, loss, args.steps, args.lr, config.seed, config.class_count)
            sets = _relogit(sets, model)
        _write_sets(sets, out)
    (out / "config.json").parent.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.__dict__, indent=1) + "\n", encoding="utf-8")
    return 0


def _policy(args, method):
    return OodPolicy(args.ood_ratio, args.ood_label or OOD_METHODS[method.upper()], args.seed)


def cmd_fit(args):
    base, use_ood, use_dac = parse_calibrator(args.method)
    if base == "none":
        raise ValueError("nothing to fit for method 'none'")
    use_ood = use_ood or (args.ood_pool is not None and base.upper() in OOD_METHODS)
    use_dac = use_dac or args.dac
    calib_set = load_records(args.calib, Role.ID_CALIB)
    if use_ood:
        if args.ood_pool is None:
            raise ValueError(f"{args.method} needs --ood-pool")
        pool = load_records(args.ood_pool, Role.OOD_POOL)
        calib = make_ood_calibset(calib_set, pool, _policy(args, base))
    else:
        calib = CalibSet.from_evalset(calib_set)
    cal = make_calibrator(base).fit(calib.logits, calib.targets)
    cal.ood_exposed_ = use_ood
    if use_dac:
        if calib_set.embeddings is None:
            raise ValueError("--dac needs embeddings in the calibration records")
        cal = DensityAwareCalibration(cal, k=args.dac_k).fit(calib_set.logits, calib_set.labels,
                                                              calib_set.embeddings)
    save_calibrator(cal, args.out)
    print(json.dumps({"method": cal.name, "out": str(args.out)}))
    return 0


def _predict(cal, s):
    if cal is None:
        return softmax(s.logits)
    if isinstance(cal, DensityAwareCalibration):
        return cal.predict_proba(s.logits, s.embeddings)
    return cal.predict_proba(s.logits)


def cmd_apply(args):
    cal = load_calibrator(args.model)
    s = load_records(args.input, args.role)
    probs = _predict(cal, s)
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec, p in zip(s.records, probs):
            obj = {"probs": p.tolist()}
            if rec.label is not None:
                obj["label"] = rec.label
            fh.write(json.dumps(obj) + "\n")
    return 0


def _paths(value):
    return [p for p in value.split(",") if p]


def cmd_eval(args):
    if args.members:
        evals = [load_records(p, args.role) for p in _paths(args.members)]
        if args.method == "none":
            from .ensemble import mean_probs
            probs = mean_probs([softmax(s.logits) for s in evals])
        else:
            if not args.calib_members:
                raise ValueError("--calib-members is required with --method")
            base, use_ood, _ = parse_calibrator(args.method)
            calibs = [load_records(p, Role.ID_CALIB) for p in _paths(args.calib_members)]
            if len(calibs) != len(evals):
                raise ValueError("--members and --calib-members need the same number of files")
            if use_ood or args.ood_pools:
                pools = [load_records(p, Role.OOD_POOL) for p in _paths(args.ood_pools or "")]
                if len(pools) != len(calibs):
                    raise ValueError("--ood-pools needs one pool file per member")
                sets = [make_ood_calibset(c, p, _policy(args, base)) for c, p in zip(calibs, pools)]
            else:
                sets = [CalibSet.from_evalset(c) for c in calibs]
            ens = CalibratedEnsemble(base, args.ensemble_order).fit(sets)
            probs = ens.predict_proba([s.logits for s in evals])
        labels = evals[0].labels
    else:
        s = load_records(args.input, args.role)
        cal = load_calibrator(args.model) if args.model else None
        probs, labels = _predict(cal, s), s.labels
    report = evaluate(probs, labels, args.bins)
    if args.reliability:
        Path(args.reliability).write_text(report.reliability.to_csv(), encoding="utf-8")
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def cmd_grid(args):
    plan = ExperimentPlan.from_json(args.plan)
    rows = run_experiment(plan)
    paths = emit_report(rows, args.out)
    failed = sum(r.status != "ok" for r in rows)
    print(json.dumps({"rows": len(rows), "failed": failed, "files": [str(p) for p in paths]}))
    return 0


def _names(value):
    return [v for v in value.split(",") if v] if value else None


def cmd_stats(args):
    records = read_results_csv(args.report)
    matrix, blocks, treatments = treatment_matrix(
        records, args.metric, args.split,
        losses=_names(args.losses), calibrators=_names(args.calibrators), strategies=_names(args.strategies))
    chi2, p = friedman_test(matrix)
    sig = nemenyi_test(matrix, args.alpha)
    ranks = mean_ranks(matrix)
    pairs = [[treatments[i], treatments[j]] for i in range(len(treatments))
             for j in range(i + 1, len(treatments)) if sig[i, j]]
    print(json.dumps({
        "metric": args.metric, "split": args.split, "blocks": len(blocks), "treatments": treatments,
        "chi2": chi2, "p_value": p, "mean_ranks": ranks.tolist(),
        "critical_difference": critical_difference(len(treatments), len(blocks), args.alpha),
        "significant_pairs": pairs,
    }, indent=1))
    return 0


def _add_ood_flags(p):
    p.add_argument("--ood-ratio", type=float, default=DEFAULT_RATIO)
    p.add_argument("--ood-label", choices=["uniform", "zero"], default=None)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="shiftcal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic shift benchmark as record files")
    p.add_argument("--config", help="SynthConfig JSON file; flags override its fields")
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int, help="samples per labeled split")
    p.add_argument("--n-ood", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma-id", type=float)
    p.add_argument("--sigma-shift", type=float, action="append", help="repeat for several shifted splits")
    p.add_argument("--sigma-ood", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", choices=KINDS, help="train a linear model with this loss and write its logits")
    p.add_argument("--ls-lambda", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--er-alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--members", type=int, default=0, help="write this many correlated ensemble members")
    p.add_argument("--member-correlation", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a calibrator and save it as JSON")
    p.add_argument("--calib", required=True)
    p.add_argument("--method", required=True, help="TS, ETS, IRM, IROVa, IROVaTS, EBS, EBS- (+OOD, +DAC)")
    p.add_argument("--ood-pool")
    _add_ood_flags(p)
    p.add_argument("--dac", action="store_true")
    p.add_argument("--dac-k", type=int, default=DEFAULT_K)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("apply", help="write calibrated probabilities for a record file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--role", default="id_test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("eval", help="print ECE, Brier, NLL and balanced accuracy")
    p.add_argument("--input")
    p.add_argument("--model")
    p.add_argument("--role", default="id_test")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--reliability", help="write the reliability table CSV here")
    p.add_argument("--members", help="comma-separated member record files for the evaluation split")
    p.add_argument("--calib-members", help="comma-separated member calibration files")
    p.add_argument("--ood-pools", help="comma-separated member OOD pool files")
    p.add_argument("--ensemble-order", choices=[PRE, POST], default=PRE)
    p.add_argument("--method", default="TS")
    _add_ood_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="run an experiment plan and write reports")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("stats", help="Friedman and Nemenyi tests on a results CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--metric", default="ece", choices=["ece", "brier", "nll", "balanced_accuracy"])
    p.add_argument("--split", default="shifted", choices=["shifted", "id"])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--losses", help="comma-separated loss names to keep")
    p.add_argument("--calibrators", help="comma-separated calibrator names to keep")
    p.add_argument("--strategies", help="comma-separated ensemble strategies to keep")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "eval" and not args.members and not args.input:
        print("error: eval needs --input or --members", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
