"""weightflow command line: simulate -> pretrain -> train -> eval -> export.

Every stage reads and writes plain files in one run directory.  Each artifact
carries the hash of the run config it was produced with, and a stage refuses
to consume artifacts with a different hash unless ``--allow-hash-mismatch``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .backbone import ParamLayout
from .errors import ConfigError, MissingArtifactError, NumericError
from .hyperflow import Autoencoder, Hypernet, SolverConfig, build_spline
from .pipeline import (LatentFit, RunConfig, evaluate_mode, fit_latent_path, pretrain, simulate_data,
                       train_flow)
from .ssa import load_snapshots, save_snapshots
from .train import (MODES, AnchorSet, HypernetResult, TimeMap, TrainConfig,
                    TrainingDiverged, write_reports)

log = logging.getLogger("weightflow")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

RUN_KEYS = [f.name for f in dataclasses.fields(RunConfig) if f.name not in ("train", "out_dir")]
TRAIN_KEYS = [f.name for f in dataclasses.fields(TrainConfig) if f.name != "solver"]
SOLVER_KEYS = [f.name for f in dataclasses.fields(SolverConfig)]
SECTIONS = {"run": RUN_KEYS, "train": TRAIN_KEYS, "solver": SOLVER_KEYS}


# --------------------------------------------------------------------------- config

def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if key == "order":
            return None if raw.lower() in ("", "none") else tuple(int(v) for v in raw.split(","))
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value).lower() if isinstance(value, bool) else str(value)


def build_config(path: str | None, overrides: list[str], out_dir: str | None = None) -> RunConfig:
    """Defaults, then the config file, then ``section.key=value`` overrides."""
    defaults = {
        "run": {f.name: f.default for f in dataclasses.fields(RunConfig) if f.name in RUN_KEYS},
        "train": {f.name: f.default for f in dataclasses.fields(TrainConfig) if f.name in TRAIN_KEYS},
        "solver": {f.name: f.default for f in dataclasses.fields(SolverConfig)},
    }
    values = {s: {} for s in SECTIONS}
    if path is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not Path(path).exists():
            raise ConfigError(f"config file {path} not found")
        cp.read(path)
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp[section].items():
                if key not in SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[section][key] = _coerce(raw, defaults[section][key], key)
    for item in overrides:
        lhs, sep, raw = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in SECTIONS or key not in SECTIONS[section]:
            raise ConfigError(f"unknown setting {lhs!r}")
        values[section][key] = _coerce(raw, defaults[section][key], key)
    train = TrainConfig(**values["train"], solver=SolverConfig(**values["solver"]))
    return RunConfig(**values["run"], train=train, out_dir=out_dir or "run")


def config_text(rc: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    d = rc.to_dict()
    cp["run"] = {k: _format(d[k]) for k in RUN_KEYS}
    cp["train"] = {k: _format(d["train"][k]) for k in TRAIN_KEYS}
    cp["solver"] = {k: _format(d["train"]["solver"][k]) for k in SOLVER_KEYS}
    buf = io.StringIO()
    buf.write(f"# effective configuration, hash {rc.config_hash}\n")
    cp.write(buf)
    return buf.getvalue()


# --------------------------------------------------------------------------- run directory

class RunDir:
    def __init__(self, rc: RunConfig, allow_mismatch: bool = False):
        self.rc = rc
        self.root = Path(rc.out_dir)
        self.allow_mismatch = allow_mismatch

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def echo_config(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.path("config.ini").write_text(config_text(self.rc))
        self.path("config.json").write_text(json.dumps({"config_hash": self.rc.config_hash,
                                                        "config": self.rc.to_dict()},
                                                       indent=2, sort_keys=True) + "\n")

    def check_hash(self, found: str | None, what: str) -> None:
        if found == self.rc.config_hash:
            return
        msg = f"{what} was produced with config hash {found}, current config is {self.rc.config_hash}"
        if not self.allow_mismatch:
            raise ConfigError(msg + " (pass --allow-hash-mismatch to use it anyway)")
        log.warning("%s; continuing because --allow-hash-mismatch was given", msg)

    def require(self, path: Path, command: str) -> Path:
        if not path.exists():
            raise MissingArtifactError(f"{path} is missing; run `weightflow {command}` first")
        return path

    def write_csv(self, path: Path, header: list[str], rows) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        buf.write(f"# config_hash={self.rc.config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        path.write_text(buf.getvalue())

    def read_csv(self, path: Path, command: str) -> list[dict]:
        text = self.require(path, command).read_text()
        first, _, rest = text.partition("\n")
        self.check_hash(first.partition("=")[2].strip() if first.startswith("#") else None, str(path))
        return list(csv.DictReader(io.StringIO(rest)))

    # ---- datasets
    def save_data(self, train_set, eval_set) -> None:
        self.path("data").mkdir(parents=True, exist_ok=True)
        extra = {"config_hash": self.rc.config_hash}
        save_snapshots(self.path("data", "train.csv"), train_set, extra)
        save_snapshots(self.path("data", "eval.csv"), eval_set, extra)

    def load_data(self, which: str):
        snap = load_snapshots(self.require(self.path("data", f"{which}.csv"), "simulate"))
        self.check_hash(snap.meta.get("config_hash"), f"data/{which}.csv")
        return snap

    # ---- anchors
    def save_anchors(self, anchors: AnchorSet) -> None:
        layout = anchors.config.layout.to_json()
        for i in range(anchors.n):
            checkpoint.save(self.path("anchors", f"anchor_{i:02d}.wflw"), anchors.thetas[i], {
                "stage": "anchor", "index": i, "anchor_time": float(anchors.times[i]),
                "layout": layout, "config_hash": self.rc.config_hash,
                "nll": float(anchors.nll[i])})
        rows = [(i, float(anchors.times[i]), e, float(v))
                for i, h in enumerate(anchors.history) for e, v in enumerate(h)]
        self.write_csv(self.path("anchors", "nll_log.csv"), ["anchor", "time", "epoch", "nll"], rows)

    def load_anchors(self) -> AnchorSet:
        files = sorted(self.path("anchors").glob("anchor_*.wflw")) if self.path("anchors").exists() else []
        if not files:
            raise MissingArtifactError("no anchor checkpoints found; run `weightflow pretrain` first")
        thetas, times, nlls = [], [], []
        cfg = self.rc.backbone
        for f in files:
            theta, meta = checkpoint.load(f, "anchor")
            self.check_hash(meta.get("config_hash"), str(f))
            if ParamLayout.from_json(meta["layout"]) != cfg.layout:
                raise ConfigError(f"{f}: parameter layout differs from the configured backbone")
            thetas.append(theta)
            times.append(meta["anchor_time"])
            nlls.append(meta["nll"])
        return AnchorSet(np.array(times), np.stack(thetas), np.array(nlls), cfg)

    # ---- hypernetwork, autoencoder, spline
    def save_flow(self, res: HypernetResult, latent: LatentFit | None) -> None:
        net, h = res.net, self.rc.config_hash
        d = self.path("model", res.mode)
        arch = {"m": net.m, "d_model": net.d_model, "heads": net.heads, "d_time": net.d_time,
                "d_ff": net.d_ff}
        shapes = [[p.name, list(p.shape)] for p in net.params()]
        checkpoint.save(d / "hypernet.wflw", np.concatenate([net.get_flat(), net.buffers()]), {
            "stage": "hypernet", "mode": res.mode, "arch": arch, "params": shapes,
            "n_buffers": int(net.buffers().size), "backbone_layout": net.layout.to_json(),
            "time_map": [res.time_map.t0, res.time_map.t1], "knots": [float(k) for k in res.knots],
            "config_hash": h})
        self.write_csv(d / "loss.csv", ["epoch", "loss", "recon", "energy", "grad_norm", "lr"],
                       [(r["epoch"], r["loss"], r["recon"], r["energy"], r["grad_norm"], r["lr"])
                        for r in res.history])
        if latent is not None:
            ae = latent.autoencoder
            checkpoint.save(d / "autoencoder.wflw", ae.get_flat(), {
                "stage": "autoencoder", "dim": ae.dim, "m": ae.m, "hidden": ae.hidden,
                "config_hash": h})
            self.write_csv(d / "autoencoder_loss.csv", ["epoch", "loss"], enumerate(ae.history))
            path = latent.path
            checkpoint.save(d / "spline.wflw", np.concatenate([path.times, path.knots.ravel()]), {
                "stage": "spline", "n": len(path.times), "m": path.m, "config_hash": h})

    def load_flow(self, mode: str) -> HypernetResult:
        d = self.path("model", mode)
        flat, meta = checkpoint.load(self.require(d / "hypernet.wflw", f"train --mode {mode}"), "hypernet")
        self.check_hash(meta.get("config_hash"), str(d / "hypernet.wflw"))
        net = Hypernet(ParamLayout.from_json(meta["backbone_layout"]), **meta["arch"])
        nb = meta["n_buffers"]
        net.set_flat(flat[:-nb])
        net.set_buffers(flat[-nb:])
        path = None
        if mode == "cde":
            sp, smeta = checkpoint.load(self.require(d / "spline.wflw", "train --mode cde"), "spline")
            self.check_hash(smeta.get("config_hash"), str(d / "spline.wflw"))
            n = smeta["n"]
            path = build_spline(sp[:n], sp[n:].reshape(n, smeta["m"]))
        return HypernetResult(net, TimeMap(*meta["time_map"]), mode, path, np.array(meta["knots"]))

    def load_autoencoder(self, mode: str = "cde") -> Autoencoder:
        flat, meta = checkpoint.load(self.require(self.path("model", mode, "autoencoder.wflw"),
                                                  "train --mode cde"), "autoencoder")
        self.check_hash(meta.get("config_hash"), "autoencoder")
        ae = Autoencoder(meta["dim"], meta["m"], meta["hidden"])
        ae.set_flat(flat)
        return ae


# --------------------------------------------------------------------------- commands

def cmd_simulate(rd: RunDir, args) -> None:
    train_set, eval_set = simulate_data(rd.rc)
    rd.echo_config()
    rd.save_data(train_set, eval_set)
    log.info("wrote %d training times and %d evaluation times to %s", train_set.n_times,
             eval_set.n_times, rd.path("data"))


def cmd_pretrain(rd: RunDir, args) -> None:
    train_set = rd.load_data("train")
    anchors = pretrain(rd.rc, train_set)
    rd.echo_config()
    rd.save_anchors(anchors)
    log.info("wrote %d anchors (mean NLL %.4f)", anchors.n, float(anchors.nll.mean()))


def _train_modes(rd: RunDir, args) -> list[str]:
    if args.mode == "both":
        return ["cde", "ode"]
    return [args.mode or rd.rc.train.mode]


def cmd_train(rd: RunDir, args) -> None:
    anchors = rd.load_anchors()
    for mode in _train_modes(rd, args):
        latent = fit_latent_path(rd.rc, anchors) if mode == "cde" else None
        try:
            res = train_flow(rd.rc, anchors, latent, mode)
        except TrainingDiverged as exc:
            if exc.result is not None:
                rd.echo_config()
                rd.save_flow(exc.result, latent)
                log.error("saved the last finite %s checkpoint to %s", mode, rd.path("model", mode))
            raise
        rd.echo_config()
        rd.save_flow(res, latent)
        log.info("%s flow trained: final loss %.5g", mode, res.history[-1]["loss"])


def _eval_modes(rd: RunDir, args) -> list[str]:
    if args.mode:
        return list(dict.fromkeys(args.mode))
    modes = ["nearest_anchor"]
    for m, short in (("weightflow_cde", "cde"), ("weightflow_ode", "ode")):
        if rd.path("model", short, "hypernet.wflw").exists():
            modes.append(m)
    return modes


def cmd_eval(rd: RunDir, args) -> None:
    eval_set = rd.load_data("eval")
    anchors = rd.load_anchors()
    reports = []
    for mode in _eval_modes(rd, args):
        if mode not in MODES:
            raise ConfigError(f"unknown eval mode {mode!r}; choose from {', '.join(MODES)}")
        flow = None if mode == "nearest_anchor" else rd.load_flow(mode.split("_")[1])
        reports.append(evaluate_mode(rd.rc, mode, eval_set, anchors, flow))
    rd.echo_config()
    write_reports(reports, rd.path("eval"), {"config_hash": rd.rc.config_hash, "seed": rd.rc.seed})
    for rep in reports:
        log.info("%-15s %s", rep.mode, "  ".join(f"{k}={v:.4g}" for k, v in rep.averages.items()))


def cmd_export(rd: RunDir, args) -> None:
    summary_path = rd.require(rd.path("eval", "eval_summary.json"), "eval")
    summary = json.loads(summary_path.read_text())
    rd.check_hash(summary.get("config_hash"), str(summary_path))
    with open(rd.require(rd.path("eval", "eval.csv"), "eval")) as fh:
        rows = list(csv.DictReader(fh))
    out = rd.path("export")
    rd.write_csv(out / "metrics.csv", ["time", "mode", "metric", "value"],
                 [(float(r["time"]), r["mode"], r["metric"], float(r["value"])) for r in rows])
    nll = rd.read_csv(rd.path("anchors", "nll_log.csv"), "pretrain")
    last = {}
    for r in nll:
        last[r["anchor"]] = r
    rd.write_csv(out / "anchors.csv", ["anchor", "time", "final_nll"],
                 [(int(r["anchor"]), float(r["time"]), float(r["nll"])) for r in last.values()])
    curves = []
    for mode in ("cde", "ode"):
        p = rd.path("model", mode, "loss.csv")
        if p.exists():
            curves += [(mode, int(r["epoch"]), float(r["loss"]), float(r["recon"]), float(r["energy"]))
                       for r in rd.read_csv(p, "train")]
    rd.write_csv(out / "loss_curves.csv", ["mode", "epoch", "loss", "recon", "energy"], curves)
    bundle = {"config_hash": rd.rc.config_hash, "seed": rd.rc.seed, "config": rd.rc.hash_dict(),
              "eval": summary["modes"]}
    (out / "summary.json").write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    log.info("export written to %s", out)


COMMANDS = {"simulate": cmd_simulate, "pretrain": cmd_pretrain, "train": cmd_train,
            "eval": cmd_eval, "export": cmd_export}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weightflow", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI file with [run], [train], [solver] sections "
                        "(later stages default to <out>/config.ini)")
    common.add_argument("-o", "--out", default=None, help="run directory (default: ./run)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="shortcut for --set run.seed=N")
    common.add_argument("--system", help="shortcut for --set run.system=NAME")
    common.add_argument("--allow-hash-mismatch", action="store_true",
                        help="consume artifacts written under a different config hash")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "pretrain", "export"):
        sub.add_parser(name, parents=[common])
    t = sub.add_parser("train", parents=[common])
    t.add_argument("--mode", choices=["cde", "ode", "both"], help="default: train.mode from config")
    e = sub.add_parser("eval", parents=[common])
    e.add_argument("--mode", action="append", choices=list(MODES),
                   help="repeatable; default: nearest_anchor plus every trained flow")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"run.seed={args.seed}")
        if args.system is not None:
            overrides.append(f"run.system={args.system}")
        cfg_file = args.config
        echoed = Path(args.out or "run") / "config.ini"
        if cfg_file is None and args.command != "simulate" and echoed.exists():
            cfg_file = str(echoed)   # later stages default to the run's own config
        rc = build_config(cfg_file, overrides, args.out)
        rd = RunDir(rc, args.allow_hash_mismatch)
        log.info("config hash %s, run directory %s", rc.config_hash, rd.root)
        # overflow is reported as a numeric error by the tape, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            COMMANDS[args.command](rd, args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        log.error("missing artifact: %s", exc)
        return EXIT_MISSING
    except (NumericError, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
