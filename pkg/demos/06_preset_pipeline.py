"""Run a pinned end-to-end experiment and read its artifacts.

Presets materialize their sweeps into an idempotent store (re-running skips
finished cells) and emit CSV/JSON reports. This demo runs the cheapest one,
the certified ranking-flip search, and prints what it wrote. The heavier
presets (corr-vs-lr, topk, heatmap, bound-check, theorem-check) follow the
same pattern and share a sweep store; see the README for the full list.
"""

import json
import os
import sys
import tempfile

from tinylr.presets import preset_fragility

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="tinylr-demo-")
print(f"writing into {out} (pass a directory argument to keep/reuse artifacts)\n")

summary = preset_fragility(out)
print("certified ranking flip:")
print(f"  pair        : {summary['pair'][0]} vs {summary['pair'][1]}")
print(f"  eta window  : {summary['eta_low']:.3g} -> {summary['eta_high']:.3g} "
      f"(ratio {summary['eta_ratio']:.1f})")
print(f"  signed gaps : {summary['gap_low']:+.3e} -> {summary['gap_high']:+.3e}")
print(f"  flips found : {summary['n_flips_found']}")

print("\nartifacts:")
for root, _, files in os.walk(out):
    for name in sorted(files):
        path = os.path.join(root, name)
        print(f"  {os.path.relpath(path, out):50s} {os.path.getsize(path):8d} bytes")

with open(os.path.join(out, "fragility", "fragility.json")) as fh:
    print("\nfragility.json:")
    print(json.dumps(json.load(fh), indent=1, sort_keys=True))
