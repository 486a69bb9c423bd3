"""HOM coincidence vs Stark detuning and MZ gate output vs probe detuning.

    python scripts/quantum_devices.py --out results/devices
"""

import argparse
from pathlib import Path

import numpy as np

from molguide.circuits import SourceSpec, hom_coincidence, hom_coincidence_engine, run_mz_gate, stark_tune
from molguide.cli import write_table
from molguide.nonlinear import NonlinearParams, find_peak, scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/devices"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    p = NonlinearParams()
    g = p.gamma

    src = SourceSpec()
    rows = []
    for d in np.linspace(-5, 5, 201):
        other = stark_tune(src, d * g)
        rows.append([d, hom_coincidence(src, other), hom_coincidence_engine(src, other)])
    write_table(args.out / "hom_vs_detuning.csv",
                ["detuning_over_gamma", "coincidence", "coincidence_engine"], rows)

    rows = []
    for d in np.linspace(-3, 3, 121):
        if d == 0:
            continue
        off = run_mz_gate(src, False, p, d * g)
        on = run_mz_gate(src, True, p, d * g)
        rows.append([d, off["P_detector0"], off["P_detector1"], on["P_detector0"], on["P_detector1"],
                     on["P_lost"]])
    write_table(args.out / "mzgate_vs_detuning.csv",
                ["detuning_over_gamma", "P0_no_pump", "P1_no_pump", "P0_pump", "P1_pump", "P_lost_pump"],
                rows)
    best = find_peak(scan(p), "differential").delta
    off, on = run_mz_gate(src, False, p, best), run_mz_gate(src, True, p, best)
    print(f"at delta = {best / g:+.3f} Gamma: P1 {off['P_detector1']:.5f} (no pump) vs "
          f"{on['P_detector1']:.5f} (pump)")


if __name__ == "__main__":
    main()
