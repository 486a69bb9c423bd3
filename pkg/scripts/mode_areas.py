"""Strip vs slot mode areas, group indices and coupling ratios, plus a standoff sweep.

    python scripts/mode_areas.py --out results/mode_areas --spacing-nm 10
"""

import argparse
import math
from pathlib import Path

from molguide.cli import write_json, write_table
from molguide.coupling import EmitterParams, evaluate_coupling
from molguide.materials import EmitterPosition, Grid2D, locate_emitter, standard_slot, standard_strip
from molguide.modes import effective_mode_area, group_velocity, solve_modes


def geometry_summary(spec, pos, spacing):
    grid = Grid2D.for_spec(spec, spacing=spacing)
    mode = solve_modes(spec, grid)[0]
    area = effective_mode_area(mode, locate_emitter(spec, pos))
    vg = group_velocity(spec, grid)
    cp = evaluate_coupling(EmitterParams(), math.sqrt(area.permittivity_at_emitter), area.area,
                           vg.group_velocity)
    return mode, {"n_eff": mode.effective_index, "A_eff_over_lambda2": area.area_over_lambda2,
                  "group_index": vg.group_index, "ratio": cp.ratio,
                  "guided_fraction": cp.guided_fraction}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/mode_areas"))
    ap.add_argument("--spacing-nm", type=float, default=10.0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    h = args.spacing_nm * 1e-9

    strip, slot = standard_strip(), standard_slot()
    strip_mode, s = geometry_summary(strip, EmitterPosition(), h)
    _, t = geometry_summary(slot, EmitterPosition(in_slot=True), h)
    summary = {"strip": s, "slot": t, "slot_over_strip_ratio": t["ratio"] / s["ratio"]}
    write_json(summary, args.out / "summary.json")
    for name, d in (("strip", s), ("slot", t)):
        print(f"{name:5s} n_eff={d['n_eff']:.5f} A/lambda^2={d['A_eff_over_lambda2']:.4f} "
              f"n_g={d['group_index']:.4f} ratio={d['ratio']:.4f}")
    print(f"slot/strip coupling gain {summary['slot_over_strip_ratio']:.3f}")

    rows = []
    for standoff_nm in (0, 10, 20, 40, 60, 80, 120, 160):
        loc = locate_emitter(strip, EmitterPosition(vertical_standoff=standoff_nm * 1e-9))
        a = effective_mode_area(strip_mode, loc)
        rows.append([standoff_nm, a.area_over_lambda2])
    write_table(args.out / "strip_area_vs_standoff.csv", ["standoff_nm", "A_eff_over_lambda2"], rows)


if __name__ == "__main__":
    main()
