"""
Segment features
================

The ENF track is cut into 32-sample segments. Each segment becomes 38
numbers: variance, mean, the mean of the three largest jumps, two AR(2)
coefficients, a 5-level orthonormal Haar decomposition and the range. Each
recording kind then keeps its own subset of them.
"""
# %%
import numpy as np

from enfloc.enf import extract_enf_power
from enfloc.features import FeatureMask, apply_mask, feature_matrix, haar_dwt, segment_enf
from enfloc.synth import synth_recording

from _common import panel_by_label

panel = panel_by_label()
rec, _ = synth_recording(panel["S-B"], "power", 600, 1000, seed=3)
enf = extract_enf_power(rec, 50)
segments = segment_enf(enf)
print(f"{len(enf)} ENF samples -> {segments.shape[0]} segments of {segments.shape[1]}")

# %%
F = feature_matrix(enf)
print("first segment: var=%.2e mean=%.4f top3-diff=%.2e AR2=(%.3f, %.3f) range=%.4f"
      % (F[0, 0], F[0, 1], F[0, 2], F[0, 3], F[0, 4], F[0, 37]))

# %%
# The Haar transform is orthonormal, so it keeps the segment's energy.
c = haar_dwt(segments[0])
print(f"energy before {segments[0] @ segments[0]:.6f}, after {c @ c:.6f}")

# %%
# Feature subsets differ per kind; 50 Hz power keeps 26, 60 Hz audio keeps 10.
for kind in ("50power", "60power", "50audio", "60audio"):
    m = FeatureMask.selected(kind)
    print(f"{kind}: {len(m):2d} features, leading with {m.indices[:5]}")
print("masked first row (50power):", np.round(apply_mask(F[0], FeatureMask.selected("50power"))[:5], 4))
