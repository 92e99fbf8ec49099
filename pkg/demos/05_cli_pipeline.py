"""
The batch pipeline
==================

Same steps as the ``satrrm`` command line, driven from Python on a small
run. Equivalent shell session::

    satrrm gen --manifest run.json
    satrrm label --manifest run.json
    satrrm train --manifest run.json --head cls
    satrrm train --manifest run.json --head reg
    satrrm eval --manifest run.json --head reg

500 samples is only enough to show the plumbing; the head comparison needs
the full manifests/full_run.json run.
"""

import json
import tempfile
from pathlib import Path

from satrrm.cli import main

work = Path(tempfile.mkdtemp())
manifest = work / "run.json"
manifest.write_text(json.dumps({"out": "out", "n_samples": 500, "seed": 3, "train": {"epochs": 300, "variance_threshold": 0.9999, "penalty_weight": 30.0}}))

for argv in (["gen"], ["label"], ["train", "--head", "cls"], ["train", "--head", "reg"], ["eval", "--head", "reg"]):
    code = main([argv[0], "--manifest", str(manifest), *argv[1:]])
    assert code == 0, code

report = json.loads((work / "out" / "report_reg.json").read_text())
print(json.dumps(report["extra"]["head_comparison"], indent=2))
print("files:", sorted(p.name for p in (work / "out").iterdir()))
