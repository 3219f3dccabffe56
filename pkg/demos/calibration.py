"""Fit the free model parameters to the shipped anchors from nominal values.

Run: python3 demos/calibration.py   (about ten seconds)
"""
from regenscatter.calibrate import default_anchors, default_space, fit_models
from regenscatter.link_eval import ModelBundle
from regenscatter.signal_core import RandomSource

cal = fit_models(default_anchors(), default_space(), RandomSource(0, 0), base=ModelBundle())
print("converged:", cal.converged, " loss %.3e  evaluations %d" % (cal.fit.loss, cal.fit.n_evaluations))
for name, value in zip(cal.space.names, cal.fit.params):
    print("  %-34s %.6g" % (name, value))
for row in cal.residuals:
    label = row["observable"] + " " + ",".join("%s=%g" % kv for kv in row["args"].items())
    print("  %-48s target %10.4g  got %10.4g  %s" % (label, row["target"], row["value"], "ok" if row["met"] else "MISS"))
