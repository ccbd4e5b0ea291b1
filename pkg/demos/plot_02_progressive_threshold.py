"""
Progressive proposal selection
==============================

The restoration head learns from pseudo points picked out of the matching
head's output. Early on only confident proposals pass; the threshold then
slides from tau1 down to tau1 - tau2 along an exponential ramp.
"""

import numpy as np

from sparsecount.model import Prediction
from sparsecount.pseudo import ScheduleConfig, hard_threshold_select, pps_select, pps_threshold, schedule_weight

cfg = ScheduleConfig(tau1=0.6, tau2=0.4, total_epochs=60)
for t in range(0, 61, 10):
    print(f"epoch {t:2d}  W={schedule_weight(t, cfg):.3f}  threshold={pps_threshold(t, cfg):.3f}")

###############################################################################
# On a fixed prediction the selected sets only ever grow.

rng = np.random.default_rng(0)
conf = rng.beta(2, 2, size=256)
pts = rng.uniform(0, 32, size=(256, 2))
pred = Prediction(conf, np.zeros_like(pts), pts)
sizes = [pps_select(pred, t, cfg).count for t in range(61)]
print("N^s by epoch:", sizes[::10])

# the hard rule is a single fixed cut
print("hard threshold at 0.6 keeps", hard_threshold_select(pred, 0.6).count)
