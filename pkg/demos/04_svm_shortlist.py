"""
SVM shortlist
=============

One-vs-one RBF machines score each segment; pairwise probabilities are
coupled into a class distribution, and the geometric mean over segments
ranks the grids. The top three (50 Hz) or two (60 Hz) go on to pole
matching. Grids S-F and S-G share their ENF statistics, so the shortlist
should keep both in play.
"""
# %%
import numpy as np

from enfloc.enf import extract_enf_power
from enfloc.features import FeatureMask, feature_matrix
from enfloc.svm import aggregate_and_shortlist, train_multiclass
from enfloc.synth import file_seed, synth_recording

from _common import panel_by_label

panel = panel_by_label()
grids = ["S-B", "S-D", "S-E", "S-F", "S-G"]
rows, labels = [], []
for i, g in enumerate(grids):
    for j in range(2):
        rec, _ = synth_recording(panel[g], "power", 900, 1000, file_seed(4, 2 * i + j))
        F = feature_matrix(extract_enf_power(rec, 50))
        rows.append(F)
        labels += [g] * F.shape[0]
model = train_multiclass(np.vstack(rows), labels, "50power", FeatureMask.selected("50power"))
print(f"trained on {len(labels)} segments: C={model.C:g}, gamma={model.gamma:.4f}, "
      f"CV accuracy {model.cv_accuracy:.3f}")

# %%
for g in ("S-F", "S-G", "S-D"):
    rec, _ = synth_recording(panel[g], "power", 600, 1000, file_seed(40, grids.index(g)))
    P = model.segment_probabilities(feature_matrix(extract_enf_power(rec, 50)))
    dec = aggregate_and_shortlist(model, P)
    probs = ", ".join(f"{k}={dec.probabilities[k]:.3f}" for k in dec.shortlist)
    print(f"true {g}: shortlist {dec.shortlist} ({probs})")
