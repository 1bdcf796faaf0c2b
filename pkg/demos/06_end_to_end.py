"""
Desk-scale experiment
=====================

Twelve synthetic grids, two training and two test files per grid and type,
run through the full cascade. The table compares the ENF-only SVM decision
with the cascade's pole-matched decision. Pass ``--duration`` to shorten
the recordings for a quicker look.
"""
# %%
import argparse
import tempfile
import time
from pathlib import Path

from enfloc.cascade import PipelineConfig, TrainingItem, evaluate, train
from enfloc.synth import SynthCorpusSpec, default_panel, generate_corpus, read_manifest

parser = argparse.ArgumentParser()
parser.add_argument("--duration", type=float, default=600.0)
parser.add_argument("--jobs", type=int, default=1)
args = parser.parse_args()

t0 = time.perf_counter()
with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    panel = tuple(default_panel())
    for part, seed in (("train", 1), ("test", 2)):
        generate_corpus(SynthCorpusSpec(panel, 2, args.duration, 1000, seed, prefix=part + "_"),
                        root / part)
    print(f"corpus written in {time.perf_counter() - t0:.0f} s")

    # %%
    items = [TrainingItem(r["path"], r["grid"], r["type"])
             for r in read_manifest(root / "train" / "manifest.csv")]
    model = train(items, PipelineConfig(), jobs=args.jobs)
    for kind, m in sorted(model.svms.items()):
        print(f"{kind}: {len(m.classes)} grids, CV accuracy {m.cv_accuracy:.3f}")

    # %%
    test = [(r["path"], r["grid"], r["type"]) for r in read_manifest(root / "test" / "manifest.csv")]
    table, _ = evaluate(model, test, jobs=args.jobs)
    print(table.format())
print(f"total {time.perf_counter() - t0:.0f} s")
