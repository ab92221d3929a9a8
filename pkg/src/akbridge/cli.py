"""Command-line front end.

``akbridge reference | static | al | compare | simulate``. Every command writes
plot-ready CSV/JSON plus ``manifest.json`` (resolved config, seeds, version,
timestamps, sha256 of each output). Only the manifest carries timestamps, so
the other files are byte-identical across reruns of the same config and seed.

Exit codes: 0 ok, 2 configuration/input error, 3 simulator failure, 4
numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .active_learning import run as run_al
from .active_learning import static_study
from .config import OUT_ENV, ProtocolConfig, load_config
from .errors import (ConfigError, MismatchedReference, NumericalError, PoolExhausted, SimulatorError,
                     ZeroReference)
from .reliability import ReferenceTable, ReliabilityEstimate, build_reference, evaluate_batch, reference_validator
from .sampling import grid

MANIFEST_VERSION = 1
REFERENCE_CSV = "reference.csv"
PF_REF_JSON = "pf_ref.json"


# ---------------------------------------------------------------- file helpers

def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")


def _num(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else "inf")


def _write_rows(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(r) + "\n")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class _Run:
    """Collects outputs of one command and writes the manifest last."""

    def __init__(self, command: str, out: Path, cfg: ProtocolConfig | None, seeds: dict, extra=None):
        self.command = command
        self.out = out
        self.cfg = cfg
        self.seeds = seeds
        self.extra = extra or {}
        self.files: list[str] = []
        self.started = _now()
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def finish(self) -> Path:
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "command": self.command,
            "config": self.cfg.to_dict() if self.cfg is not None else None,
            "seeds": self.seeds,
            "version": __version__,
            "started": self.started,
            "finished": _now(),
            "outputs": {f: sha256(self.out / f) for f in sorted(set(self.files))},
        }
        manifest.update(self.extra)
        path = self.out / "manifest.json"
        write_json(path, manifest)
        return path


# ---------------------------------------------------------------- reference

def _reference_seeds(cfg: ProtocolConfig) -> dict:
    return {"reference": cfg.reference_seed}


def _write_reference(run: _Run, cfg: ProtocolConfig, threads: int):
    sim = cfg.simulator()
    est, table = build_reference(sim, cfg.space, cfg.reliability.reference_n, cfg.reference_seed, threads)
    csv_path = run.path(REFERENCE_CSV)
    table.to_csv(csv_path)
    digest = sha256(csv_path)
    write_json(run.path(PF_REF_JSON), {"estimate": est.to_dict(), "reference_digest": digest,
                                       "names": cfg.space.names})
    return est, table, digest


def _load_reference(ref_dir: Path, cfg: ProtocolConfig):
    ref_dir = Path(ref_dir)
    try:
        meta = json.loads((ref_dir / PF_REF_JSON).read_text())
        table = ReferenceTable.from_csv(ref_dir / REFERENCE_CSV)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"--reference: cannot load reference from {ref_dir}: {exc}") from None
    digest = sha256(ref_dir / REFERENCE_CSV)
    if digest != meta.get("reference_digest"):
        raise ConfigError(f"--reference: {REFERENCE_CSV} in {ref_dir} does not match its recorded digest")
    est = ReliabilityEstimate.from_dict(meta["estimate"])
    if est.seed != cfg.reference_seed or est.n_evals != cfg.reliability.reference_n:
        raise ConfigError(f"--reference: reference in {ref_dir} was built with seed {est.seed}, n {est.n_evals}; "
                          f"config expects seed {cfg.reference_seed}, n {cfg.reliability.reference_n}")
    return est, table, digest


def _obtain_reference(run: _Run, cfg: ProtocolConfig, ref_dir, threads: int):
    if ref_dir is not None:
        est, table, digest = _load_reference(ref_dir, cfg)
        run.extra["reference"] = {"source": str(ref_dir), "digest": digest}
    else:
        est, table, digest = _write_reference(run, cfg, threads)
        run.extra["reference"] = {"source": "computed", "digest": digest}
    if not est.pf > 0:
        raise ZeroReference("reference pf is zero: no failures among the reference sample, E_pf is undefined")
    return est, table, digest


def cmd_reference(cfg: ProtocolConfig, out: Path, threads: int = 1) -> Path:
    run = _Run("reference", out, cfg, _reference_seeds(cfg))
    _, _, digest = _write_reference(run, cfg, threads)
    pts = grid(cfg.space, cfg.reliability.reference_grid).points
    q, g = evaluate_batch(cfg.simulator(), pts, threads)
    rows = ([_num(v) for v in x] + [_num(qq), _num(gg), str(bool(gg <= 0.0)).lower()]
            for x, qq, gg in zip(pts, q, g))
    _write_rows(run.path("grid_map.csv"), cfg.space.names + ["q", "g", "failed"], rows)
    run.extra["reference"] = {"source": "computed", "digest": digest}
    return run.finish()


# ---------------------------------------------------------------- static / al

def _use_reference_sample(cfg: ProtocolConfig) -> bool:
    return cfg.reliability.error_estimator == "reference_sample"


def cmd_static(cfg: ProtocolConfig, out: Path, ref_dir=None, threads: int = 1) -> Path:
    seeds = {"static_designs": {str(n): cfg.seed + n for n in cfg.al.static_sizes},
             "subset": cfg.seed, **_reference_seeds(cfg)}
    run = _Run("static", out, cfg, seeds)
    est, table, digest = _obtain_reference(run, cfg, ref_dir, threads)
    validator = reference_validator(table, est.pf)
    rows = static_study(cfg.simulator(), cfg.space, cfg.al.static_sizes, cfg.surrogate, est.pf,
                        cfg.reliability.subset(cfg.seed), cfg.seed, validator)
    use_val = _use_reference_sample(cfg)
    out_rows, curve = [], []
    for r in rows:
        pf, e = (r.pf_val, r.E_pf_val) if use_val else (r.pf, r.E_pf)
        out_rows.append([str(r.n), _num(pf), _num(e), str(r.calls), _num(r.pf), _num(r.E_pf), r.status, r.reason])
        if r.status == "ok":
            curve.append([r.calls, e])
    _write_rows(run.path("static.csv"), ["n", "pf", "E_pf", "calls", "pf_subset", "E_pf_subset", "status", "reason"],
                out_rows)
    method = f"{cfg.surrogate.kind}-static"
    write_json(run.path("summary.json"), {
        "command": "static", "method": method, "surrogate": cfg.surrogate.kind,
        "reference_digest": digest, "pf_ref": est.pf, "error_estimator": cfg.reliability.error_estimator,
        "curve": curve,
    })
    return run.finish()


def cmd_al(cfg: ProtocolConfig, out: Path, ref_dir=None, threads: int = 1) -> Path:
    from .active_learning import POOL_SEED_OFFSET, SUBSET_SEED_OFFSET

    seeds = {"initial_design": cfg.seed, "pool": cfg.seed + POOL_SEED_OFFSET,
             "subset": cfg.seed + SUBSET_SEED_OFFSET, **_reference_seeds(cfg)}
    run = _Run("al", out, cfg, seeds)
    est_ref, table, digest = _obtain_reference(run, cfg, ref_dir, threads)
    use_val = _use_reference_sample(cfg)
    validator = reference_validator(table, est_ref.pf) if use_val else None
    try:
        res = run_al(cfg.simulator(), cfg.space, cfg.al_config(), validation=validator, pf_ref=est_ref.pf)
    except Exception as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            trace.status = f"failed: {type(exc).__name__}"
            trace.to_csv(run.path("trace.csv"), cfg.space.names)
            run.finish()
        raise
    res.trace.to_csv(run.path("trace.csv"), cfg.space.names)
    res.model.save(run.path("model.json"))

    pts = grid(cfg.space, cfg.al.map_resolution).points
    pred = res.model.predict(pts)
    rows = ([_num(v) for v in x] + [_num(mu), _num(sd), str(bool(mu <= 0.0)).lower()]
            for x, mu, sd in zip(pts, pred.mean, pred.std))
    _write_rows(run.path("map.csv"), cfg.space.names + ["mean", "std", "failed"], rows)

    last = res.trace.records[-1]
    kind = cfg.surrogate.kind
    write_json(run.path("summary.json"), {
        "command": "al", "method": f"{kind}-al-eps{cfg.al.eps_pf:g}", "surrogate": kind,
        "eps_pf": cfg.al.eps_pf, "status": res.trace.status, "n_calls": res.trace.n_calls,
        "iterations": len(res.trace.records), "pf": res.estimate.pf, "cov": res.estimate.cov,
        "max_levels_exceeded": res.estimate.max_levels_exceeded, "pf_val": last.pf_val,
        "E_pf": last.E_pf, "reference_digest": digest, "pf_ref": est_ref.pf,
        "error_estimator": cfg.reliability.error_estimator,
        "curve": [[r.n_calls, r.E_pf] for r in res.trace.records],
    })
    return run.finish()


# ---------------------------------------------------------------- compare

def cmd_compare(run_dirs, out: Path) -> Path:
    if not run_dirs:
        raise ConfigError("compare: need at least one run directory")
    summaries = []
    for d in run_dirs:
        try:
            summaries.append((Path(d), json.loads((Path(d) / "summary.json").read_text())))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"compare: {d} is not a static/al run directory ({exc})") from None
    digests = {s["reference_digest"] for _, s in summaries}
    if len(digests) > 1:
        listing = ", ".join(f"{d}: {s['reference_digest'][:12]}" for d, s in summaries)
        raise MismatchedReference(f"runs cite different references ({listing})")
    run = _Run("compare", out, None, {}, {"inputs": {str(d): sha256(d / "summary.json") for d, _ in summaries},
                                          "reference_digest": digests.pop()})
    rows = [[s["method"], str(int(calls)), _num(e)] for _, s in summaries for calls, e in s["curve"]]
    _write_rows(run.path("compare.csv"), ["method", "calls", "E_pf"], rows)
    return run.finish()


def cmd_simulate(cfg: ProtocolConfig, x) -> dict:
    from .beam_sim import deflection_limit

    sim = cfg.simulator()
    x = np.asarray(x, dtype=float)
    if x.shape != (cfg.space.dim,):
        raise ConfigError(f"--x: expected {cfg.space.dim} value(s), got {x.size}")
    q, g = sim.evaluate(x)
    return {"x": x.tolist(), "q": q, "limit": deflection_limit(x, cfg.beam, cfg.limit_state), "g": g,
            "failed": bool(g <= 0.0)}


# ---------------------------------------------------------------- argparse

def _sizes(text: str):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="akbridge", description="Active-learning reliability of a continuous beam.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="JSON config or a manifest.json from an earlier run")
        sp.add_argument("--seed", type=int, help="master seed (overrides config and AKBRIDGE_SEED)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for simulator batches")
        if out:
            sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or runs/<command>)")

    sp = sub.add_parser("reference", help="brute-force LHS reference study and simulator map")
    common(sp)
    sp.add_argument("--n", type=int, help="reference sample size")

    sp = sub.add_parser("static", help="one-shot Kriging sweep over design sizes")
    common(sp)
    sp.add_argument("--sizes", type=_sizes, help="comma-separated design sizes, e.g. 10,25,40")
    sp.add_argument("--surrogate", choices=("kriging", "pck"))
    sp.add_argument("--reference", help="directory of a previous 'reference' run")

    sp = sub.add_parser("al", help="active-learning run")
    common(sp)
    sp.add_argument("--surrogate", choices=("kriging", "pck"))
    sp.add_argument("--eps", type=float, help="relative pf change threshold")
    sp.add_argument("--max-calls", type=int, help="simulator call budget")
    sp.add_argument("--reference", help="directory of a previous 'reference' run")

    sp = sub.add_parser("compare", help="merge static/al runs into one E_pf table")
    sp.add_argument("runs", nargs="+", help="run directories")
    sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or runs/compare)")

    sp = sub.add_parser("simulate", help="evaluate the limit state at one point")
    common(sp, out=False)
    sp.add_argument("--x", type=float, nargs="+", required=True, help="support positions")
    return p


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or Path("runs") / args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            path = cmd_compare(args.runs, _out_dir(args))
            print(path)
            return 0
        if getattr(args, "threads", 1) < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, reference_n=getattr(args, "n", None), static_sizes=getattr(args, "sizes", None),
            surrogate=getattr(args, "surrogate", None), eps_pf=getattr(args, "eps", None),
            max_calls=getattr(args, "max_calls", None))
        if args.command == "simulate":
            print(json.dumps(_clean(cmd_simulate(cfg, args.x)), sort_keys=True))
            return 0
        out = _out_dir(args)
        if args.command == "reference":
            path = cmd_reference(cfg, out, args.threads)
        elif args.command == "static":
            path = cmd_static(cfg, out, args.reference, args.threads)
        else:
            path = cmd_al(cfg, out, args.reference, args.threads)
        print(path)
        return 0
    except (ConfigError, MismatchedReference, ZeroReference) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulatorError as exc:
        print(f"error: simulator failed at x={list(exc.x)}: {exc.cause}", file=sys.stderr)
        return 3
    except (NumericalError, PoolExhausted) as exc:
        print(f"error: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
