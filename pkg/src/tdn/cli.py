"""Command-line pipeline: simulate -> pretrain -> train -> evaluate -> report.

Every verb takes ``--config FILE`` (JSON) plus flags mirroring each config
field; flags override the file. Outputs live under ``workdir``::

    data/<system>-<scenario>.csv (+ .meta.json)
    models/vae.tdnm, models/vae-loss.csv
    models/tdn.tdnm, models/tdn-loss.csv
    eval/report.csv, eval/summary.json, eval/monitor.json
    eval/traces/detection-<fault>.csv, eval/traces/estimation-<fault>.csv

Exit codes: 0 ok, 2 configuration error, 3 data/model error, 4 numeric
divergence.
"""

import argparse
import dataclasses
import glob
import json
import logging
import os
import sys

import numpy as np

from . import serialization
from .config import ExperimentConfig, load_config
from .errors import ConfigError, ContractError, DataError, ModelFormatError, NumericError, ShapeError
from .fileio import atomic_write_text, csv_text
from .idn import build_idn
from .monitor import DetectionReport, classify, fit_monitor, residuals, score_fault, t2
from .seeding import substream
from .sim.datasets import gen_dataset, read_dataset, scenarios, write_dataset
from .transfer import FaultSampler, Scaler, TdnModel, fit_scaler, train_tdn, vae_checksum
from .vae import VaeModel, build_vae, pretrain_vae

log = logging.getLogger("tdn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# -- paths -------------------------------------------------------------------


def _path(cfg, *parts):
    return os.path.join(cfg.workdir, *parts)


def dataset_path(cfg, scenario):
    return _path(cfg, "data", f"{cfg.system}-{scenario}.csv")


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _stamp(cfg):
    return [f"config_hash={cfg.config_hash()}", f"seed={cfg.seed}"]


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


# -- verbs -------------------------------------------------------------------


def cmd_simulate(cfg, scenario=None):
    out = _path(cfg, "data")
    if not os.path.isdir(out):
        raise ConfigError(f"output directory does not exist: {out} (create it or run with --mkdir)")
    names = [scenario] if scenario else scenarios(cfg.system)
    written = []
    for name in names:
        ds = gen_dataset(cfg.system, name, cfg.seed, cfg.train_size, cfg.test_size)
        path = dataset_path(cfg, ds.meta["scenario"])
        write_dataset(path, ds, {"config_hash": cfg.config_hash()})
        log.info("wrote %s (%d rows)", path, len(ds))
        written.append(path)
    return written


def _load_train(cfg):
    path = dataset_path(cfg, "train")
    if not os.path.exists(path):
        raise DataError(f"training dataset not found: {path}; run 'simulate' first")
    ds = read_dataset(path)
    if ds.labels.any():
        raise DataError(f"{path}: training data must be all-normal")
    return ds


def cmd_pretrain(cfg):
    ds = _load_train(cfg)
    names = list(ds.meta.get("channels", [])) or None
    scaler = fit_scaler(ds.Z, names)
    vae = build_vae(
        cfg.vae_architecture, ds.Z.shape[1], substream(cfg.seed, "init-vae"), cfg.latent_dim,
        cfg.eval_samples, cfg.lambda_v,
    )
    trace = pretrain_vae(
        vae, scaler.apply(ds.Z), substream(cfg.seed, "vae-train"), cfg.vae_epochs, cfg.batch_size,
        cfg.learning_rate, cfg.lambda_v, cfg.train_samples,
    )
    models = _ensure_dir(_path(cfg, "models"))
    meta = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "weights_sha256": vae_checksum(vae)}
    serialization.save(os.path.join(models, "vae.tdnm"), vae.to_bundle(scaler.as_tuple(), meta))
    atomic_write_text(
        os.path.join(models, "vae-loss.csv"),
        csv_text(["epoch", "J_V"], [(i + 1, float(v)) for i, v in enumerate(trace)], _stamp(cfg)),
    )
    return trace


def _load_vae(cfg):
    path = _path(cfg, "models", "vae.tdnm")
    if not os.path.exists(path):
        raise DataError(f"pretrained VAE not found: {path}; run 'pretrain' first")
    bundle = serialization.load(path)
    vae = VaeModel.from_bundle(bundle)
    recorded = bundle.meta.get("weights_sha256")
    if recorded is not None and recorded != vae_checksum(vae):
        raise ContractError(f"{path}: VAE weights do not match their recorded checksum")
    if bundle.scaler is None:
        raise ModelFormatError(f"{path}: VAE file carries no scaler")
    return vae, bundle.scaler


def cmd_train(cfg):
    ds = _load_train(cfg)
    vae, sc = _load_vae(cfg)
    scaler = Scaler(*sc)
    vae.freeze()
    idn = build_idn(cfg.idn_architecture, ds.Z.shape[1], substream(cfg.seed, "init-idn"))
    model = TdnModel(idn, vae, scaler)
    sampler = FaultSampler(cfg.p_add, cfg.amp_low, cfg.amp_high)
    checksum = vae_checksum(vae)
    trace = train_tdn(
        model, scaler.apply(ds.Z), sampler, cfg.seed, cfg.epochs, cfg.batch_size, cfg.learning_rate,
        cfg.lambda_tl, cfg.train_samples,
    )
    if vae_checksum(model.vae) != checksum:
        raise ContractError("VAE weights changed during transfer training")
    model.meta = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "vae_sha256": checksum}
    models = _ensure_dir(_path(cfg, "models"))
    serialization.save(os.path.join(models, "tdn.tdnm"), model.to_bundle())
    atomic_write_text(os.path.join(models, "tdn-loss.csv"), csv_text(trace.HEADER, trace.rows, _stamp(cfg)))
    return trace


def _load_tdn(cfg):
    path = _path(cfg, "models", "tdn.tdnm")
    if not os.path.exists(path):
        raise DataError(f"trained TDN not found: {path}; run 'train' first")
    model = TdnModel.from_bundle(serialization.load(path))
    if model.scaler is None:
        raise ModelFormatError(f"{path}: TDN file carries no scaler")
    return model


def evaluate(model, train_Z, test_sets, expected_far=0.005):
    """Fit the monitor on ``train_Z`` and score each test dataset.

    Returns ``(monitor, report, traces, train_far)``; ``traces`` maps fault id
    to ``(T2, predictions, f_est, f_true)`` in standardized units.
    """
    sc = model.scaler
    Zs = sc.apply(train_Z)
    monitor = fit_monitor(model.idn, Zs, expected_far)
    train_far = float(np.mean(classify(monitor.threshold, monitor.statistic(model.idn, Zs))))
    report, traces = DetectionReport(), {}
    for ds in test_sets:
        if len(ds) == 0:
            raise DataError(f"test set {ds.fault_id} is empty")
        if ds.Z.shape[1] != model.idn.m_z:
            raise ShapeError(f"test set {ds.fault_id} has {ds.Z.shape[1]} columns, model expects {model.idn.m_z}")
        phi = residuals(model.idn, sc.apply(ds.Z))
        stat = t2(monitor.stats, phi)
        pred = classify(monitor.threshold, stat)
        f_est = -phi
        f_true = sc.scale_only(ds.F) if ds.additive else None
        report.faults.append(score_fault(ds.fault_id, pred, ds.labels, f_est if ds.additive else None, f_true))
        traces[ds.fault_id] = (stat, pred, f_est, f_true)
    return monitor, report, traces, train_far


def cmd_evaluate(cfg):
    model = _load_tdn(cfg)
    train = _load_train(cfg)
    paths = sorted(glob.glob(_path(cfg, "data", f"{cfg.system}-test-*.csv")))
    if not paths:
        raise DataError(f"no test datasets under {_path(cfg, 'data')}; run 'simulate' first")
    tests = [read_dataset(p) for p in paths]
    monitor, report, traces, train_far = evaluate(model, train.Z, tests, cfg.expected_far)

    out = _ensure_dir(_path(cfg, "eval"))
    tdir = _ensure_dir(os.path.join(out, "traces"))
    stamp = _stamp(cfg)
    rows = [
        (f.fault_id, f.far, f.mdr, "" if f.rmse is None else f.rmse, f.n_fa, f.n_ta, f.n_md, f.n_rd)
        for f in report.faults
    ]
    atomic_write_text(
        os.path.join(out, "report.csv"),
        csv_text(["fault_id", "FAR", "MDR", "RMSE", "N_FA", "N_TA", "N_MD", "N_RD"], rows, stamp),
    )
    summary = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "system": cfg.system,
        "idn_architecture": cfg.idn_architecture,
        "vae_architecture": cfg.vae_architecture,
        "AFAR": report.afar,
        "AMDR": report.amdr,
        "ARMSE": report.armse,
        "J_th": monitor.threshold.j_th,
        "train_FAR": train_far,
        "faults": [dataclasses.asdict(f) for f in report.faults],
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    _write_json(os.path.join(out, "monitor.json"), dict(monitor.to_dict(), config_hash=cfg.config_hash()))
    j_th = monitor.threshold.j_th
    for ds in tests:
        stat, pred, f_est, f_true = traces[ds.fault_id]
        det = [(k, float(stat[k]), j_th, int(ds.labels[k]), int(pred[k])) for k in range(len(ds))]
        atomic_write_text(
            os.path.join(tdir, f"detection-{ds.fault_id}.csv"),
            csv_text(["k", "T2", "J_th", "label", "prediction"], det, stamp),
        )
        est = []
        for k in range(len(ds)):
            for j in range(f_est.shape[1]):
                est.append((k, j + 1, "" if f_true is None else float(f_true[k, j]), float(f_est[k, j])))
        atomic_write_text(
            os.path.join(tdir, f"estimation-{ds.fault_id}.csv"),
            csv_text(["k", "variable", "f_true", "f_est"], est, stamp),
        )
    return summary


def _mean_std(values):
    vals = [v for v in values if v is not None and v != ""]
    if not vals:
        return "", ""
    arr = np.asarray(vals, dtype=float)
    return float(arr.mean()), (float(arr.std(ddof=1)) if len(arr) > 1 else "")


def cmd_report(run_dirs, out_dir):
    """Merge evaluated runs. Runs are grouped by config hash; groups are never mixed."""
    groups, absent = {}, []
    for run in run_dirs:
        path = os.path.join(run, "eval", "summary.json")
        if not os.path.exists(path):
            log.warning("run %s has no evaluation summary; listed as absent", run)
            absent.append(run)
            continue
        with open(path) as fh:
            s = json.load(fh)
        groups.setdefault(s["config_hash"], []).append((run, s))
    if not os.path.isdir(out_dir):
        raise ConfigError(f"report output directory does not exist: {out_dir}")

    rows, fault_rows, listing = [], [], {}
    for h in sorted(groups):
        runs = sorted(groups[h], key=lambda r: (r[1]["seed"], r[0]))
        first = runs[0][1]
        seeds = [s["seed"] for _, s in runs]
        row = [h, first["system"], first["idn_architecture"], first["vae_architecture"], len(runs),
               " ".join(str(x) for x in seeds)]
        for key in ("AFAR", "AMDR", "ARMSE", "J_th"):
            row.extend(_mean_std([s[key] for _, s in runs]))
        rows.append(row)
        listing[h] = [r for r, _ in runs]
        fids = [f["fault_id"] for f in first["faults"]]
        for fid in fids:
            per = [next(f for f in s["faults"] if f["fault_id"] == fid) for _, s in runs if any(
                f["fault_id"] == fid for f in s["faults"])]
            fr = [h, fid, len(per)]
            for key in ("far", "mdr", "rmse"):
                fr.extend(_mean_std([p[key] for p in per]))
            fault_rows.append(fr)

    header = ["config_hash", "system", "idn_architecture", "vae_architecture", "n_runs", "seeds"]
    for key in ("AFAR", "AMDR", "ARMSE", "J_th"):
        header += [f"{key}_mean", f"{key}_std"]
    atomic_write_text(os.path.join(out_dir, "summary.csv"), csv_text(header, rows))
    fheader = ["config_hash", "fault_id", "n_runs"]
    for key in ("FAR", "MDR", "RMSE"):
        fheader += [f"{key}_mean", f"{key}_std"]
    atomic_write_text(os.path.join(out_dir, "faults.csv"), csv_text(fheader, fault_rows))
    _write_json(os.path.join(out_dir, "report.json"), {"groups": listing, "absent": absent})
    return rows, absent


# -- argument parsing ----------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="JSON experiment config")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        typ = type(f.default) if f.default is not None and not isinstance(f.default, str) else None
        if f.name in ("train_size", "test_size"):
            typ = int
        p.add_argument(flag, dest=f.name, type=typ or str, default=None)
    p.add_argument("--mkdir", action="store_true", help="create the output directory if missing")


def build_parser():
    parser = argparse.ArgumentParser(prog="tdn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("simulate", help="generate datasets")
    _add_config_flags(p)
    p.add_argument("--scenario", help="'train' or 'test-<fault id>'; default: all")
    for verb, text in (
        ("pretrain", "pretrain the VAE on normal data"),
        ("train", "transfer-train the decoupling network"),
        ("evaluate", "fit the monitor and score every test set"),
    ):
        _add_config_flags(sub.add_parser(verb, help=text))
    p = sub.add_parser("report", help="merge evaluated runs (mean and std over seeds)")
    p.add_argument("runs", nargs="+", help="run work directories")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _config_from_args(args):
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(ExperimentConfig)}
    cfg = load_config(args.config, overrides)
    if args.mkdir:
        os.makedirs(os.path.join(cfg.workdir, "data"), exist_ok=True)
    return cfg


def run(argv=None):
    args = build_parser().parse_args(argv)
    if args.verb == "report":
        cmd_report(args.runs, args.out)
        return EXIT_OK
    cfg = _config_from_args(args)
    if args.verb == "simulate":
        cmd_simulate(cfg, args.scenario)
    elif args.verb == "pretrain":
        cmd_pretrain(cfg)
    elif args.verb == "train":
        cmd_train(cfg)
    elif args.verb == "evaluate":
        s = cmd_evaluate(cfg)
        print(f"AFAR {100 * s['AFAR']:.2f}%  AMDR {100 * s['AMDR']:.2f}%  ARMSE {s['ARMSE']}")
    return EXIT_OK


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(
        level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(argv)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (DataError, ModelFormatError, ContractError, ShapeError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
