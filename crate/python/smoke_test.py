"""Smoke test for the gaitforge_py extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
then run:
    python3 python/smoke_test.py
"""

import json
import math
import tempfile

import gaitforge_py as gf


def main() -> None:
    ds = gf.Dataset.synthetic("small")
    subjects, sessions, trials = ds.counts()
    assert (subjects, sessions, trials) == (36, 60, 240), ds.counts()
    assert dict(ds.class_counts("subject"))["N"] == 12

    both = ds.balanced("ncakh", "both", seed=1)
    assert both.counts()[0] == 30, both.counts()

    with tempfile.TemporaryDirectory() as tmp:
        meta = ds.write(tmp)
        assert gf.Dataset.load(meta).counts() == ds.counts()

    feats = gf.Features(ds)
    assert len(gf.Features.parameter_names()) == 52
    params = feats.parameters()
    assert len(params) == len(feats.parameter_trial_ids()) == len(feats.parameter_classes())
    assert all(len(row) == 52 for row in params)

    report = feats.run_cell(task="nvgd", rep="pca-all5", classifier="svm-linear", seed=3)
    assert 0.0 <= report.accuracy <= 100.0
    assert math.isclose(report.divergence, report.accuracy - report.baseline, abs_tol=1e-9)
    assert sum(map(sum, report.confusion)) > 0
    assert json.loads(report.to_json())["task"] == "N/GD"

    cells = [json.loads(c) for c in feats.run_table("table4", seed=3, annotate=True)]
    assert len(cells) == 8
    assert all(c["reference"] is not None for c in cells)

    smooth = gf.butterworth_lowpass([math.sin(0.01 * i) for i in range(500)], 1000.0, 20.0)
    assert len(smooth) == 500

    retained, eigenvalues, components = gf.pca_fit([[1.0, 2.0], [2.0, 4.1], [3.0, 6.2], [4.0, 7.9]], 0.9)
    assert retained == 1 and eigenvalues[0] >= eigenvalues[1] and len(components) == 2

    rows = [[float(i % 2) * 5.0 + 0.1 * j, 0.3 * j] for i in range(20) for j in range(3)]
    labels = [i % 2 for i in range(20) for _ in range(3)]
    subjects = [i for i in range(20) for _ in range(3)]
    assert gf.lda_score(rows, labels, subjects, eval="resub") == 100.0

    print("python smoke test passed:", report)


if __name__ == "__main__":
    main()
