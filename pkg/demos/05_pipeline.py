"""
End-to-end run with a manifest
==============================

Write a synthetic review file, run every stage, and list what came out.
The same steps are available from the shell as ``ratingcohorts synth`` and
``ratingcohorts run``.
"""

import json
import tempfile
from pathlib import Path

from ratingcohorts import pipeline, synthdata

work = Path(tempfile.mkdtemp(prefix="ratingcohorts-"))
synthdata.generate(synthdata.SynthConfig(n_users=4000, n_restaurants=100, ratings_per_user=20, seed=2)).write(work)

cfg = pipeline.RunConfig(reviews=str(work / "reviews.csv"), format="csv", out=str(work / "run"),
                         allowed_scores=(2.5, 3.0, 3.5), replicates=50)
manifest = pipeline.run_pipeline(cfg)

for stage in manifest["stages"]:
    print(f"{stage['stage']:10s} {stage['seconds']:6.2f}s")
for name, digest in manifest["outputs"].items():
    print(f"  {name:22s} {digest[:12]}")

print(json.loads((work / "run" / "thresholds.json").read_text()))
print((work / "run" / "table1.md").read_text())
