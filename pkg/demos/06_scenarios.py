"""Running catalogued scenarios programmatically.

Each scenario bundles a simulation with its exact reference and a pass
criterion.  This is the same path the ``twotime`` command takes.
"""
from twotime.config import config_from_dict
from twotime.runner import emit_results, run_scenario
from twotime.scenarios import CATALOG

for name, scen in CATALOG.items():
    print(f"{name:24s} {scen.description}")

cfg = config_from_dict({"scenario": "two_path_interference", "replicas": 32, "batch": 16,
                        "output_dir": "demo_results/two_path"})
bundle = run_scenario(cfg, progress=print)
for line in bundle.verdict_lines():
    print(line)
print("wrote", [p.name for p in emit_results(bundle)])
