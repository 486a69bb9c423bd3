"""2D FDTD sweeps: guided fraction vs standoff, and Bragg directionality vs periods and detuning.

    python scripts/fdtd_sweeps.py --out results/fdtd --periods 0,2,4,6
"""

import argparse
from dataclasses import replace
from pathlib import Path

from molguide.cli import write_table
from molguide.fdtd import (BraggSpec, FdtdConfig, SlabStructure, directionality,
                           guided_fraction_fdtd, run_bragg_sim, run_dipole_sim)
from molguide.materials import standard_strip


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/fdtd"))
    ap.add_argument("--standoffs-nm", default="10,20,40,60,90,120")
    ap.add_argument("--periods", default="0,2,4,6")
    ap.add_argument("--detunings", default="-0.3,-0.15,0,0.15,0.3")
    ap.add_argument("--spacing-nm", type=float, default=10.0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    spec = standard_strip()
    cfg = FdtdConfig(spacing=args.spacing_nm * 1e-9)
    rows = []
    for s in (float(v) for v in args.standoffs_nm.split(",")):
        rep = run_dipole_sim(cfg.with_source(s * 1e-9), SlabStructure(spec))
        f = guided_fraction_fdtd(rep)
        rows.append([s, f["total"], f["left"], f["right"], rep.purcell_ratio])
        print(f"standoff {s:5.0f} nm  guided {f['total']:.4f}  Purcell {rep.purcell_ratio:.4f}")
    write_table(args.out / "guided_vs_standoff.csv",
                ["standoff_nm", "guided_fraction", "left", "right", "purcell_ratio"], rows)

    rows = []
    for n in (int(v) for v in args.periods.split(",")):
        bragg = BraggSpec.quarter_wave(spec, n)
        for d in (float(v) for v in args.detunings.split(",")):
            c = replace(cfg, pulse=cfg.pulse.detuned(d)) if d else cfg
            rep = run_bragg_sim(c, spec, bragg)
            rows.append([n, d, directionality(rep), rep.guided_right, rep.guided_left, rep.total_power])
            print(f"periods {n}  detuning {d:+.2f}  directionality {rows[-1][2]:.4f}")
    write_table(args.out / "bragg_directionality.csv",
                ["periods", "detuning", "directionality", "guided_right", "guided_left", "total_power"],
                rows)


if __name__ == "__main__":
    main()
