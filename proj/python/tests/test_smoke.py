import math
import os

import pytest

import _invercl as icl

SMALL_CONFIG = """
dataset.classes = 4
dataset.dim = 8
dataset.per_class = 20
dataset.spread = 0.08
network.layer_dims = 8, 12, 12
cl.tasks = 2
cl.epochs = 5
inversion.steps_pmi = 15
inversion.steps_full = 20
replay.enabled = true
replay.use_cfs = false
run.seed = 11
"""


def test_gaussian_kl_zero_and_positive():
    assert icl.gaussian_kl([0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0]) == 0.0
    kl = icl.gaussian_kl([1.0], [1.0], [0.0], [1.0])
    assert kl == pytest.approx(0.5)


def test_rotation_maps_u_to_v():
    u = [1.0] + [0.0] * 7
    v = [0.0, 1.0] + [0.0] * 6
    R = icl.rotation_between(u, v)
    ru = [sum(R[i][j] * u[j] for j in range(8)) for i in range(8)]
    assert max(abs(a - b) for a, b in zip(ru, v)) < 1e-9


def test_pseudo_feature_is_unit_norm():
    u = [1.0, 0.0, 0.0]
    v = [0.0, 1.0, 0.0]
    f = icl.pseudo_feature(u, v, [0.8, 0.1, 0.1], [0.0, 0.0, 1.0], 0.3)
    assert math.fsum(x * x for x in f) == pytest.approx(1.0)


def test_cfs_select_returns_requested_count():
    feats = [[0.1 * i, 1.0 - 0.1 * i, 0.3, -0.2] for i in range(20)]
    model = icl.train_contrastive(feats, epochs=5, lr=0.01, batch_size=8, seed=3,
                                  hidden_dim=8)
    sel = icl.cfs_select(mean=[0.5, 0.5, 0.3, -0.2], std=[0.1] * 4, model=model,
                         init_size=2, steps=4, candidates=3, seed=5)
    # each step keeps ceil(keep_ratio * candidates) of its candidates
    assert len(sel) == 2 + 4 * 2
    assert all(len(f) == 4 for f in sel)
    assert model.in_dim == 4


def test_run_experiment_and_invert(tmp_path):
    icl.set_num_threads(1)
    out = str(tmp_path / "run")
    res = icl.run_experiment(SMALL_CONFIG, out_dir=out)
    assert len(res["per_task"]) == 2
    assert len(res["per_task"][1]) == 2
    assert res["per_task"][0][0] >= 0.8
    assert 0.0 <= res["final_average"] <= 1.0
    assert os.path.exists(os.path.join(out, "metrics.csv"))

    ckpt = os.path.join(out, "model.ckpt")
    xs = icl.invert(ckpt, label=0, steps_pmi=60, steps_full=200, lr_full=0.03,
                    alpha=0.005, beta=2.0, batch=4, seed=7)
    assert len(xs) == 4 and len(xs[0]) == 8
    fwd = icl.forward(ckpt, xs)
    assert len(fwd["logits"]) == 4
    # inverted inputs for class 0 should score that class highly
    hits = sum(1 for row in fwd["logits"] if max(range(4), key=lambda c: row[c]) == 0)
    assert hits >= 3


def test_run_experiment_rejects_bad_config():
    with pytest.raises(ValueError):
        icl.run_experiment("bogus.key = 1\n")
