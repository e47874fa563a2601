"""Generate a synthetic cluster trace, train on the first 70%, score the rest.

Takes about a minute on one core.

    python demos/sync_detection.py [out_dir]
"""

import sys
from pathlib import Path

from sorn import SynthSpec, TrainConfig, anomaly_score, generate, normalize_rows, split, train
from sorn.plots import export_plots
from sorn.scoring import ScoreReport

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
ds = generate(SynthSpec(seed=1))
print(f"T={len(ds.series)} slots, D={ds.series.dim} bins, anomaly ratio {ds.labels.mean():.3%}")

(tr, _), (te, y_te) = split(ds.series, ds.labels, 0.7)
model = train(tr, TrainConfig(), on_epoch=lambda e, loss: print(f"  epoch {e:2d}  loss {loss:.5f}"))
mids = ds.series.scheme.midpoints


def score(series):
    out_ = model.reconstruct(series.proportions)
    return anomaly_score(series.proportions, normalize_rows(out_["reconstruction"]), mids), out_


s_tr, _ = score(tr)
s_te, rec = score(te)
for policy in ("quantile:0.99", "best_f1"):
    rep = ScoreReport.build(s_te, policy, train_scores=s_tr, labels=y_te)
    print(f"{policy:>14}: threshold {rep.threshold:7.3f}  P={rep.precision:.3f} R={rep.recall:.3f} F1={rep.f1:.3f}")

paths = export_plots(out, te.timestamps, s_te, te.expectation(), normalize_rows(rec["reconstruction"]) @ mids,
                     rec["trust"], threshold=ScoreReport.build(s_te, "quantile:0.99", train_scores=s_tr).threshold,
                     labels=y_te)
print("plots:", ", ".join(str(p) for p in paths.values()))
