"""Run the full experiment matrix through the CLI and summarise it.

reference -> static sweep -> AL-Kriging (eps 0.005 and 0.0005) -> AL-PCK -> compare.

    python scripts/run_protocol.py --out runs/protocol [--config configs/default.json] [--seed 0]
"""
import argparse
import csv
import json
import time
from pathlib import Path

from akbridge.cli import main as cli


def step(name, argv):
    t0 = time.perf_counter()
    rc = cli(argv)
    print(f"{name:<14s} rc={rc}  {time.perf_counter() - t0:6.1f} s")
    if rc:
        raise SystemExit(rc)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/protocol")
    ap.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "default.json"))
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    out = Path(args.out)
    base = ["--config", args.config] + (["--seed", str(args.seed)] if args.seed is not None else [])
    ref = str(out / "reference")

    step("reference", ["reference", *base, "--out", ref])
    step("static", ["static", *base, "--reference", ref, "--out", str(out / "static")])
    step("al-kriging", ["al", *base, "--reference", ref, "--out", str(out / "al_kriging")])
    step("al-kriging-5e-4", ["al", *base, "--reference", ref, "--eps", "0.0005",
                             "--out", str(out / "al_kriging_eps5e-4")])
    step("al-pck", ["al", *base, "--reference", ref, "--surrogate", "pck", "--out", str(out / "al_pck")])
    step("compare", ["compare", str(out / "static"), str(out / "al_kriging"), str(out / "al_pck"),
                     "--out", str(out / "compare")])

    pf_ref = json.loads((out / "reference" / "pf_ref.json").read_text())["estimate"]
    print(f"\npf_ref = {pf_ref['pf']:.4f} (cov {pf_ref['cov']:.3f})")
    with open(out / "static" / "static.csv") as fh:
        for r in csv.DictReader(fh):
            print(f"static n={r['n']:>3s}  pf={r['pf']:<10.8s} E_pf={r['E_pf']:<10.8s} {r['status']}")
    for d in ("al_kriging", "al_kriging_eps5e-4", "al_pck"):
        s = json.loads((out / d / "summary.json").read_text())
        print(f"{s['method']:<22s} {s['status']:<17s} calls={s['n_calls']:3d} pf={s['pf']:.5f} "
              f"E_pf={s['E_pf']:.4f}")


if __name__ == "__main__":
    main()
