"""All 17 catalogue scenarios against the healthy baseline.

Prints the per-scenario average DTW and QRS duration, then the direction-of-effect
checks: transmural vs subendocardial, large vs small lateral, slow vs standard CV.
"""
from pathlib import Path

from cardiotwin.forward import ForwardModel
from cardiotwin.geometry import build_phantom
from cardiotwin.qrs_analysis import detect_abnormalities, heatmap_svg, sensitivity_sweep, write_text
from cardiotwin.scenario import LOCATION_ORDER, SLOW_SCENARIO, catalogue

out = Path(__file__).parent / "out"
model = ForwardModel(build_phantom())
cat = catalogue()
table, recs = sensitivity_sweep(model, cat)

print(f"baseline QRS {table.baseline_duration:.1f} ms")
print(f"{'scenario':36s} {'DTW avg':>8s} {'QRS ms':>8s}  flags")
for s, rec in zip(cat, recs[1:]):
    f = detect_abnormalities(rec, recs[0])
    flags = [k for k, on in (("prolonged", f.prolongation), ("PRWP", f.prwp),
                             ("Q", any(f.pathological_q.values())), ("fQRS", any(f.fqrs.values()))) if on]
    print(f"{s.name:36s} {table.avg(s.name):8.4f} {table.duration(s.name):8.1f}  {' '.join(flags)}")

for loc in LOCATION_ORDER:
    t, s = table.avg(f"{loc}-transmural"), table.avg(f"{loc}-subendocardial")
    print(f"{loc:14s} transmural {'>=' if t >= s else '< '} subendocardial ({t:.4f} vs {s:.4f})")
print("slow CV prolongs QRS:", table.duration(SLOW_SCENARIO) > table.duration("lateral-large-transmural"))
write_text(out / "sweep_heatmap.svg", heatmap_svg(table))
write_text(out / "dtw_table.csv", table.to_csv())
