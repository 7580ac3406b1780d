import math

import numpy as np
import pytest

from varimp.inference import NormStats, NormalizedDataset, infer_all
from varimp.labels import HMapConfig, LabelSet, StiffnessLabel, build_labels
from varimp.policy import fit, load_model, predict, predict_params, save_model
from varimp.sim import Environment, ground_truth_stiffness, scripted_demo
from varimp.spd import CholeskyParams, cholesky_encode, sym_eig


def angle_to_line(v, n):
    c = abs(np.dot(v, n)) / (np.linalg.norm(v) * np.linalg.norm(n))
    return math.acos(min(1.0, c))


def synthetic_label_set(n=40, d=3, seed=0, linear=False):
    """Labels with either random or exactly state-linear parameters."""
    rng = np.random.default_rng(seed)
    states = rng.uniform(-1, 1, size=(n, d))
    if linear:
        w = rng.uniform(-0.3, 0.3, size=(d, 6))
        b = rng.uniform(-0.2, 0.2, size=6)
        params = states @ w + b
    else:
        params = rng.uniform(-0.5, 0.5, size=(n, 6))
    labels = [
        StiffnessLabel(episode=0, t=0.1 * i, state=states[i], frame="camera",
                       params=CholeskyParams.from_array(params[i]))
        for i in range(n)
    ]
    return LabelSet(labels=labels, kappa_min=0.1, kappa_max=10.0, cfg=HMapConfig())


def training_mse(model, label_set):
    errs = []
    for lb in label_set.labels:
        p = predict_params(model, lb.state)
        errs.append(((p - lb.params.as_array()) ** 2).mean())
    return float(np.mean(errs))


class TestFit:
    def test_knn_k1_recalls_training_point_exactly(self):
        ls = synthetic_label_set()
        model = fit(ls, "knn", k=1)
        for lb in ls.labels[::7]:
            got = predict_params(model, lb.state)
            assert np.array_equal(got, lb.params.as_array())

    def test_ridge_recovers_exactly_linear_labels(self):
        ls = synthetic_label_set(linear=True)
        model = fit(ls, "ridge", ridge_lambda=0.0)
        assert training_mse(model, ls) < 1e-10

    def test_ridge_training_mse_monotone_in_lambda(self):
        ls = synthetic_label_set(n=60)
        prev = -1.0
        for lam in (0.0, 1e-3, 1e-1, 1.0, 10.0, 1000.0):
            mse = training_mse(fit(ls, "ridge", ridge_lambda=lam), ls)
            assert mse >= prev - 1e-12
            prev = mse

    def test_rejects_too_few_labels(self):
        ls = synthetic_label_set(n=9)
        with pytest.raises(ValueError):
            fit(ls, "knn")

    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            fit(synthetic_label_set(), "tree")

    def test_deterministic(self):
        ls = synthetic_label_set()
        m1, m2 = fit(ls, "knn"), fit(ls, "knn")
        q = np.array([0.3, -0.2, 0.9])
        assert np.array_equal(predict_params(m1, q), predict_params(m2, q))


class TestPredict:
    def test_output_always_valid_profile(self):
        rng = np.random.default_rng(5)
        for variant in ("knn", "ridge"):
            model = fit(synthetic_label_set(), variant)
            for _ in range(30):
                state = rng.uniform(-50, 50, size=3)  # far outside training
                lam = sym_eig(predict(model, state)).lam
                assert lam.min() >= 1e-9 - 1e-15
                assert lam.max() <= 1.0 + 1e-12

    def test_knn_k1_training_state_decodes_label(self):
        ls = synthetic_label_set()
        model = fit(ls, "knn", k=1)
        lb = ls.labels[3]
        # this label decodes inside [0,1], so the clamp is the identity
        from varimp.spd import cholesky_decode
        direct = cholesky_decode(lb.params)
        lam = sym_eig(direct).lam
        if lam.max() <= 1.0:
            got = predict(model, lb.state)
            assert np.abs(got.mat() - direct.mat()).max() < 1e-9

    def test_dimension_mismatch(self):
        model = fit(synthetic_label_set(d=3), "knn")
        with pytest.raises(ValueError):
            predict(model, [0.1, 0.2])

    def test_bitwise_repeatable(self):
        model = fit(synthetic_label_set(), "knn")
        a = predict(model, [0.5, 0.5, 0.5]).six()
        b = predict(model, [0.5, 0.5, 0.5]).six()
        assert np.array_equal(a, b)

    def test_held_out_wall_states_soft_along_normal(self):
        env = Environment.wall(normal=(0.8, 0.15, 0.58), env_stiffness=1e5)
        train = scripted_demo(env, episodes=4, seed=41)
        ds = NormalizedDataset.from_records(train)
        label_set = build_labels(train, infer_all(ds))
        model = fit(label_set, "knn")

        held_out = scripted_demo(env, episodes=2, seed=97)
        contact = [r for r in held_out if np.linalg.norm(r.force) >= 0.5]
        stiff_dir = sym_eig(ground_truth_stiffness(env, contact[0].state)).q[:, 0]
        hits = 0
        for r in contact:
            profile = predict(model, r.state)  # camera frame
            rot = env.tool_orientation(r.act_pos)
            world = rot @ profile.mat() @ rot.T
            soft_dir = sym_eig(world).q[:, 2]
            if angle_to_line(soft_dir, stiff_dir) < math.radians(20):
                hits += 1
        assert hits / len(contact) >= 0.90


class TestModelFile:
    def test_round_trip_predictions_identical(self, tmp_path):
        for variant in ("knn", "ridge"):
            model = fit(synthetic_label_set(), variant)
            path = tmp_path / f"{variant}.json"
            save_model(model, path)
            loaded = load_model(path)
            assert loaded.variant == model.variant
            assert loaded.kappa_min == model.kappa_min
            q = np.array([0.2, -0.7, 1.3])
            assert np.array_equal(predict_params(loaded, q),
                                  predict_params(model, q))

    def test_rejects_wrong_format(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"format": "something-else/9"}')
        with pytest.raises(ValueError):
            load_model(p)
