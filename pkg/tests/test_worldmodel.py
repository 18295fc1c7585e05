import math

import numpy as np
import pytest

from sepsim.cohort import Action
from sepsim.errors import ContractError, VersionError
from sepsim.features import D, IDX
from sepsim.synth import generate_synthetic_cohort
from sepsim.worldmodel import (ModelConfig, PlateauScheduler, build_batch,
                               check_gradients, compute_loss, encode_history,
                               encode_step, evaluate_model, init_params,
                               initial_hidden, load_checkpoint, loss_and_grads,
                               predict_outcome, predict_transition,
                               prepare_trajectory, save_checkpoint,
                               static_embedding, train, transition_samples)

TINY = ModelConfig(hidden_dim=8, static_embed_dim=4, action_embed_dim=4,
                   vent_hidden_dim=6, outcome_hidden_dim=6, window_k=4,
                   dropout=0.0, batch_size=8)


@pytest.fixture(scope="module")
def cohort():
    return generate_synthetic_cohort(42, 24).imputed()


@pytest.fixture(scope="module")
def tiny_params(cohort):
    return init_params(0, TINY, cohort.norm, cohort.disc)


def batch_of(cohort, params, n=6, window=None):
    tensors = [prepare_trajectory(t, params) for t in cohort.trajectories]
    samples = transition_samples(tensors)[:n]
    return build_batch(tensors, samples, window or params.config.window_k)


class TestInit:
    def test_deterministic(self, cohort):
        a = init_params(7, TINY, cohort.norm, cohort.disc)
        b = init_params(7, TINY, cohort.norm, cohort.disc)
        for k in a.arrays:
            np.testing.assert_array_equal(a.arrays[k], b.arrays[k])

    def test_seeds_differ(self, cohort):
        a = init_params(7, TINY, cohort.norm, cohort.disc)
        b = init_params(8, TINY, cohort.norm, cohort.disc)
        assert any(not np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)

    def test_finite_predictions_at_init(self, cohort, tiny_params):
        traj = cohort.trajectories[0]
        hidden = encode_history(tiny_params, traj.steps, traj.static)
        pred = predict_transition(tiny_params, hidden, Action(2, 3))
        assert np.all(np.isfinite(pred.mu)) and np.all(np.isfinite(pred.sigma))
        assert np.all(np.isfinite(pred.denormalized_mean))
        assert 0.0 <= pred.vent_prob <= 1.0

    def test_outcome_half_at_init(self, cohort, tiny_params):
        traj = cohort.trajectories[0]
        out = predict_outcome(tiny_params, traj.steps, traj.static)
        assert out.p_mortality == pytest.approx(0.5)


class TestEncoder:
    def test_streaming_equals_full_encode(self, cohort, tiny_params):
        traj = cohort.trajectories[0]
        full = encode_history(tiny_params, traj.steps, traj.static)
        e_s = static_embedding(tiny_params, traj.static)
        from sepsim.worldmodel.net import prev_action_indices
        hidden = initial_hidden(TINY)
        for step, aprev in zip(traj.steps, prev_action_indices(traj.steps)):
            hidden = encode_step(tiny_params, hidden, step.values, step.mask, aprev, e_s)
        for a, b in zip(full.layers, hidden.layers):
            np.testing.assert_array_equal(a, b)  # bitwise

    def test_zero_params_fixed_point(self, cohort, tiny_params):
        zeroed = tiny_params.copy()
        for v in zeroed.arrays.values():
            v[...] = 0.0
        traj = cohort.trajectories[0]
        hidden = encode_history(zeroed, traj.steps, traj.static)
        for h in hidden.layers:
            np.testing.assert_array_equal(h, np.zeros_like(h))

    def test_order_sensitivity(self, cohort, tiny_params):
        traj = next(t for t in cohort.trajectories if len(t) >= 4)
        steps = list(traj.steps)
        swapped = [steps[1], steps[0]] + steps[2:]
        h1 = encode_history(tiny_params, steps, traj.static)
        h2 = encode_history(tiny_params, swapped, traj.static)
        assert not np.allclose(h1.top, h2.top)

    def test_empty_prefix_rejected(self, cohort, tiny_params):
        with pytest.raises(ContractError):
            encode_history(tiny_params, [], cohort.trajectories[0].static)

    def test_batched_matches_streaming(self, cohort, tiny_params):
        # windows anchored at admission so both paths see the start token
        from sepsim.worldmodel.net import encode_batch
        tensors = [prepare_trajectory(t, tiny_params) for t in cohort.trajectories[:3]]
        samples = [(i, TINY.window_k - 1) for i in range(3)]
        batch = build_batch(tensors, samples, TINY.window_k)
        h_top, _ = encode_batch(tiny_params, batch.dyn, batch.aprev, batch.static,
                                batch.active, train=False)
        for b, (i, t) in enumerate(samples):
            traj = cohort.trajectories[i]
            hidden = encode_history(tiny_params, traj.steps[:t + 1], traj.static)
            np.testing.assert_allclose(h_top[b], hidden.top, atol=1e-10)


class TestHeads:
    def test_sigma_floor(self, cohort, tiny_params):
        p = tiny_params.copy()
        p.arrays["gauss.b_sig"][:] = -50.0   # push softplus toward zero
        traj = cohort.trajectories[0]
        hidden = encode_history(p, traj.steps, traj.static)
        pred = predict_transition(p, hidden, Action(0, 0))
        assert np.all(pred.sigma >= TINY.sigma_min)

    def test_actions_change_mu(self, cohort, tiny_params):
        traj = cohort.trajectories[0]
        hidden = encode_history(tiny_params, traj.steps, traj.static)
        a = predict_transition(tiny_params, hidden, Action(0, 0))
        b = predict_transition(tiny_params, hidden, Action(4, 4))
        assert not np.allclose(a.mu, b.mu)

    def test_vent_hierarchy_wiring(self, cohort, tiny_params):
        p = tiny_params.copy()
        rng = np.random.default_rng(3)
        p.arrays["gauss.W_mu"][...] = rng.normal(0, 0.3, p.arrays["gauss.W_mu"].shape)
        traj = cohort.trajectories[0]
        hidden = encode_history(p, traj.steps, traj.static)
        lo = predict_transition(p, hidden, Action(1, 1), vent_override=0.0)
        hi = predict_transition(p, hidden, Action(1, 1), vent_override=1.0)
        assert not np.allclose(lo.mu, hi.mu)

    def test_soft_scores_within_ranges(self, cohort, tiny_params):
        traj = cohort.trajectories[0]
        hidden = encode_history(tiny_params, traj.steps, traj.static)
        pred = predict_transition(tiny_params, hidden, Action(2, 2))
        assert 0.0 <= pred.soft_sofa <= 24.0
        assert 0.0 <= pred.soft_sirs <= 4.0

    def test_short_windows_accepted(self, cohort, tiny_params):
        traj = cohort.trajectories[0]
        out = predict_outcome(tiny_params, traj.steps[:1], traj.static)
        assert 0.0 <= out.p_mortality <= 1.0


class TestLoss:
    def test_nll_analytic_value(self, cohort, tiny_params):
        # mu == target and sigma == 1 exactly -> per-entry NLL is 0.5*ln(2*pi)
        p = tiny_params.copy()
        p.arrays["gauss.W_sig"][...] = 0.0
        p.arrays["gauss.b_sig"][:] = math.log(math.exp(1.0 - TINY.sigma_min) - 1.0)
        batch = batch_of(cohort, p)
        from sepsim.worldmodel.loss import forward_batch
        fw = forward_batch(p, batch, train=False)
        batch.target = fw.mu.copy()
        _, comps = compute_loss(p, batch)
        assert comps["nll"] == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_bce_ln2_at_zero_logit(self, cohort, tiny_params):
        batch = batch_of(cohort, tiny_params)
        _, comps = compute_loss(tiny_params, batch)
        assert comps["outcome"] == pytest.approx(math.log(2), abs=1e-12)
        assert comps["vent"] == pytest.approx(math.log(2), abs=1e-12)

    def test_composite_weighting(self, cohort, tiny_params):
        batch = batch_of(cohort, tiny_params)
        total, comps = compute_loss(tiny_params, batch)
        assert total == pytest.approx(
            comps["nll"] + 1.0 * comps["outcome"] + 0.01 * comps["reg"]
            + 0.3 * comps["vent"], abs=1e-12)
        # the published weights produce 2.31 on unit components
        assert 1.0 + 1.0 * 1.0 + 0.01 * 1.0 + 0.3 * 1.0 == pytest.approx(2.31)

    def test_masked_nll_ignores_unobserved(self, cohort, tiny_params):
        batch = batch_of(cohort, tiny_params)
        unobserved = np.argwhere(~batch.target_mask)
        assert len(unobserved) > 0
        _, comps0 = compute_loss(tiny_params, batch)
        b, d = unobserved[0]
        batch.target[b, d] += 123.0
        _, comps1 = compute_loss(tiny_params, batch)
        assert comps1["nll"] == pytest.approx(comps0["nll"], abs=1e-15)

    def test_empty_batch_rejected(self, cohort, tiny_params):
        tensors = [prepare_trajectory(t, tiny_params) for t in cohort.trajectories]
        with pytest.raises(ContractError):
            build_batch(tensors, [], TINY.window_k)

    def test_nonfinite_aborts(self, cohort, tiny_params):
        p = tiny_params.copy()
        p.arrays["gauss.b_mu"][:] = np.inf
        batch = batch_of(cohort, p)
        with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
            compute_loss(p, batch)


class TestGradients:
    def randomized(self, cohort):
        cfg = ModelConfig(hidden_dim=6, static_embed_dim=3, action_embed_dim=3,
                          vent_hidden_dim=4, outcome_hidden_dim=4, window_k=3,
                          dropout=0.0, batch_size=4)
        params = init_params(0, cfg, cohort.norm, cohort.disc)
        rng = np.random.default_rng(1)
        for k in ("vent.w2", "vent.b2", "out.w2", "out.b2", "gauss.W_sig"):
            params.arrays[k] += rng.normal(0, 0.3, params.arrays[k].shape)
        return params

    def test_full_composite_gradient(self, cohort):
        params = self.randomized(cohort)
        batch = batch_of(cohort, params, n=4, window=3)
        report = check_gradients(params, batch, eps=1e-5)
        assert report.ok(1e-4), report.worst_param

    def test_linear_head_exactness(self, cohort):
        # NLL is quadratic in the mean projection, so central differences are
        # exact there up to float rounding
        params = self.randomized(cohort)
        batch = batch_of(cohort, params, n=4, window=3)
        report = check_gradients(params, batch, eps=1e-5)
        assert report.per_block["gauss.b_mu"] <= 1e-7

    def test_corrupted_gradient_caught(self, cohort):
        params = self.randomized(cohort)
        batch = batch_of(cohort, params, n=4, window=3)

        def corrupted(p, b):
            grads = loss_and_grads(p, b, train=False)[2]
            grads["gru0.W_hh"] += 0.05
            return grads

        report = check_gradients(params, batch, eps=1e-5, grad_fn=corrupted)
        assert not report.ok(1e-4)
        assert report.worst_param.startswith("gru0.W_hh")


class TestTraining:
    def test_loss_decreases_and_deterministic(self, cohort):
        cfg = ModelConfig(hidden_dim=12, static_embed_dim=6, action_embed_dim=6,
                          vent_hidden_dim=8, outcome_hidden_dim=8, window_k=4,
                          batch_size=64, max_epochs=2)
        runs = []
        for _ in range(2):
            params = init_params(0, cfg, cohort.norm, cohort.disc)
            _, hist = train(params, cohort, seed=5)
            runs.append(hist)
        assert runs[0][2]["train_loss"] < runs[0][1]["train_loss"]
        for h0, h1 in zip(*runs):
            if h0["train_loss"] is None:
                assert h1["train_loss"] is None
            else:
                assert abs(h0["train_loss"] - h1["train_loss"]) <= 1e-9 * abs(h0["train_loss"])
            assert abs(h0["val_loss"] - h1["val_loss"]) <= 1e-9 * abs(h0["val_loss"])

    def test_plateau_scheduler_halves(self):
        sched = PlateauScheduler(lr=1e-3, factor=0.5, patience=3)
        assert sched.step(1.0) == 1e-3
        for _ in range(3):
            assert sched.step(1.0) == 1e-3
        assert sched.step(1.0) == pytest.approx(5e-4)

    def test_inference_no_dropout(self, cohort):
        cfg = ModelConfig(hidden_dim=8, static_embed_dim=4, action_embed_dim=4,
                          vent_hidden_dim=6, outcome_hidden_dim=6, window_k=4,
                          dropout=0.5, batch_size=8)
        params = init_params(0, cfg, cohort.norm, cohort.disc)
        traj = cohort.trajectories[0]
        h1 = encode_history(params, traj.steps, traj.static)
        h2 = encode_history(params, traj.steps, traj.static)
        p1 = predict_transition(params, h1, Action(1, 2))
        p2 = predict_transition(params, h2, Action(1, 2))
        np.testing.assert_array_equal(p1.mu, p2.mu)


class TestCheckpoint:
    def test_round_trip(self, cohort, tiny_params, tmp_path):
        p = tmp_path / "wm.npz"
        params = tiny_params.copy()
        params.history = [{"epoch": 0, "val_loss": 1.0}]
        save_checkpoint(params, p)
        loaded = load_checkpoint(p)
        assert loaded.config == params.config
        assert loaded.history == params.history
        for k in params.arrays:
            np.testing.assert_array_equal(loaded.arrays[k], params.arrays[k])
        traj = cohort.trajectories[0]
        h_a = encode_history(params, traj.steps, traj.static)
        h_b = encode_history(loaded, traj.steps, traj.static)
        pred_a = predict_transition(params, h_a, Action(1, 1))
        pred_b = predict_transition(loaded, h_b, Action(1, 1))
        np.testing.assert_array_equal(pred_a.mu, pred_b.mu)
        np.testing.assert_array_equal(pred_a.sigma, pred_b.sigma)

    def test_version_mismatch(self, cohort, tiny_params, tmp_path):
        import json

        p = tmp_path / "wm.npz"
        save_checkpoint(tiny_params, p)
        data = dict(np.load(p))
        meta = json.loads(bytes(data["__meta__"]).decode())
        meta["checkpoint_version"] = 99
        data["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(p, "wb") as f:
            np.savez(f, **data)
        with pytest.raises(VersionError):
            load_checkpoint(p)


class TestEvaluate:
    def test_metric_shapes_and_ranges(self, cohort, tiny_params):
        m = evaluate_model(tiny_params, cohort.trajectories[:10])
        assert 0.0 <= m["vent_auc"] <= 1.0 or np.isnan(m["vent_auc"])
        assert m["state_mae"] > 0
        assert m["n_trajectories"] == 10

    def test_perfect_and_constant_auc(self):
        from sklearn.metrics import roc_auc_score
        y = np.array([0, 0, 1, 1])
        assert roc_auc_score(y, np.array([0.1, 0.2, 0.8, 0.9])) == 1.0
        assert roc_auc_score(y, np.array([0.5, 0.5, 0.5, 0.5])) == 0.5
