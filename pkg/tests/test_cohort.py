import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepsim.cohort import (Action, DiscretizationSpec, RawDoses, Static, Step,
                           Trajectory, compute_ne_eq, compute_tev,
                           discretize_action, fit_discretization, impute,
                           load_cohort, save_cohort)
from sepsim.errors import DomainError, FittingError, ParseError, VersionError
from sepsim.features import D, IDX


def make_traj(dose_list, pid="p0"):
    steps = []
    for i, doses in enumerate(dose_list):
        values = np.full(D, np.nan)
        values[IDX["meanbp"]] = 70.0
        mask = np.isfinite(values)
        steps.append(Step(values=values, mask=mask, doses=doses,
                          action=Action(0, 0), hour=4 * i))
    return Trajectory(pid, Static(60, 0, 80, 0, 2), steps, "survived")


class TestNeEq:
    def test_zero(self):
        assert compute_ne_eq(RawDoses()) == 0.0

    def test_ne_plus_phenylephrine(self):
        assert compute_ne_eq(RawDoses(norepinephrine=0.1, phenylephrine=1.0)) == pytest.approx(0.2, abs=1e-12)

    def test_vasopressin_per_hour(self):
        assert compute_ne_eq(RawDoses(vasopressin=2.4)) == pytest.approx(0.1, abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            compute_ne_eq(RawDoses(dopamine=-1.0))

    @given(st.lists(st.floats(0, 10), min_size=5, max_size=5),
           st.lists(st.floats(0, 10), min_size=5, max_size=5),
           st.floats(0, 4))
    def test_linear(self, a, b, lam):
        da = RawDoses(*a)
        db = RawDoses(*b)
        dsum = RawDoses(*(x + y for x, y in zip(a, b)))
        dscaled = RawDoses(*(lam * x for x in a))
        assert compute_ne_eq(dsum) == pytest.approx(compute_ne_eq(da) + compute_ne_eq(db), rel=1e-9, abs=1e-12)
        assert compute_ne_eq(dscaled) == pytest.approx(lam * compute_ne_eq(da), rel=1e-9, abs=1e-12)


class TestTev:
    def test_empty(self):
        assert compute_tev([]) == 0.0

    def test_saline_mix(self):
        assert compute_tev([("NaCl 0.9%", 1000.0), ("NaCl 3%", 250.0)]) == pytest.approx(1750.0)

    def test_concentrated_albumin(self):
        assert compute_tev([("Albumin 25%", 100.0)]) == pytest.approx(500.0)

    def test_unknown_kind_named(self):
        with pytest.raises(DomainError, match="Dextrose 5%"):
            compute_tev([("Dextrose 5%", 100.0)])

    @given(st.floats(0, 4), st.floats(0, 2000), st.floats(0, 2000))
    def test_linear(self, lam, v1, v2):
        one = compute_tev([("Lactated Ringers", v1), ("Albumin 5%", v2)])
        scaled = compute_tev([("Lactated Ringers", lam * v1), ("Albumin 5%", lam * v2)])
        assert scaled == pytest.approx(lam * one, rel=1e-9, abs=1e-9)


class TestDiscretization:
    def test_quartile_edges_vaso(self):
        trajs = [make_traj([RawDoses(norepinephrine=v, fluids=(("NaCl 0.9%", 100.0),))
                            for v in (0.1, 0.2, 0.3, 0.4)])]
        spec = fit_discretization(trajs)
        assert spec.vaso_edges == pytest.approx((0.175, 0.25, 0.325))

    def test_degenerate_single_value(self):
        trajs = [make_traj([RawDoses(norepinephrine=0.2, fluids=(("NaCl 0.9%", 100.0),))] * 5)]
        spec = fit_discretization(trajs)
        assert spec.vaso_edges == pytest.approx((0.2, 0.2, 0.2))

    def test_quartile_edges_fluid(self):
        trajs = [make_traj([RawDoses(norepinephrine=0.1, fluids=(("NaCl 0.9%", float(v)),))
                            for v in range(100, 1700, 100)])]
        spec = fit_discretization(trajs)
        assert spec.fluid_edges == pytest.approx((475.0, 850.0, 1225.0))

    def test_all_zero_axis_rejected(self):
        trajs = [make_traj([RawDoses(fluids=(("NaCl 0.9%", 100.0),))])]
        with pytest.raises(FittingError):
            fit_discretization(trajs)

    def test_binning_rules(self):
        spec = DiscretizationSpec((0.1, 0.2, 0.3), (100, 200, 300))
        assert discretize_action(RawDoses(), spec) == Action(0, 0)
        # dose exactly on an edge goes to the lower bin (right-closed)
        assert spec.vaso_bin(0.2) == 2
        assert spec.vaso_bin(0.31) == 4
        assert spec.vaso_bin(0.05) == 1
        assert spec.fluid_bin(300.0) == 3

    def test_representative_round_trip(self):
        spec = DiscretizationSpec((0.08, 0.21, 0.44), (160, 420, 1130))
        for b in range(5):
            assert spec.vaso_bin(spec.representative_ne_eq(b)) == b
            assert spec.fluid_bin(spec.representative_tev(b)) == b


class TestImpute:
    def medians(self):
        m = np.ones(D)
        m[IDX["lactate"]] = 1.8
        return m

    def traj_with_gaps(self):
        vals = [np.full(D, 5.0), np.full(D, 6.0), np.full(D, 7.0)]
        masks = [np.ones(D, bool) for _ in range(3)]
        li = IDX["lactate"]
        vals[0][li] = 2.6
        vals[1][li], vals[2][li] = np.nan, np.nan
        masks[1][li] = masks[2][li] = False
        steps = [Step(values=v, mask=m, doses=RawDoses(), action=Action(0, 0), hour=4 * i)
                 for i, (v, m) in enumerate(zip(vals, masks))]
        return Trajectory("p", Static(60, 0, 80, 0, 2), steps, "survived")

    def test_fully_observed_unchanged(self):
        t = make_traj([RawDoses()])
        t.steps[0].values[:] = 3.0
        t.steps[0].mask[:] = True
        out = impute(t, self.medians())
        assert np.array_equal(out.steps[0].values, t.steps[0].values)

    def test_forward_fill(self):
        out = impute(self.traj_with_gaps(), self.medians())
        li = IDX["lactate"]
        assert out.steps[1].values[li] == 2.6
        assert out.steps[2].values[li] == 2.6
        assert not out.steps[1].mask[li] and not out.steps[2].mask[li]

    def test_cold_start_median(self):
        t = self.traj_with_gaps()
        li = IDX["lactate"]
        t.steps[0].values[li] = np.nan
        t.steps[0].mask[li] = False
        out = impute(t, self.medians())
        assert out.steps[0].values[li] == 1.8

    def test_idempotent_and_preserves_observed(self):
        t = self.traj_with_gaps()
        once = impute(t, self.medians())
        twice = impute(once, self.medians())
        for a, b in zip(once.steps, twice.steps):
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.mask, b.mask)
        assert once.steps[0].values[IDX["lactate"]] == 2.6


class TestPersistence:
    def cohort(self):
        from sepsim.synth import generate_synthetic_cohort
        return generate_synthetic_cohort(3, 12)

    def test_round_trip(self, tmp_path):
        c = self.cohort()
        p = tmp_path / "cohort.jsonl"
        save_cohort(c, p)
        c2 = load_cohort(p)
        assert len(c2.trajectories) == len(c.trajectories)
        assert c2.splits == c.splits
        assert c2.disc == c.disc
        np.testing.assert_array_equal(c2.norm.mean, c.norm.mean)
        for a, b in zip(c.trajectories, c2.trajectories):
            assert a.patient_id == b.patient_id and a.outcome == b.outcome
            np.testing.assert_array_equal(a.values_matrix(), b.values_matrix())
            np.testing.assert_array_equal(a.masks_matrix(), b.masks_matrix())
            assert a.actions() == b.actions()

    def test_truncated_line_reports_position(self, tmp_path):
        c = self.cohort()
        p = tmp_path / "cohort.jsonl"
        save_cohort(c, p)
        text = p.read_text().splitlines()
        bad = "\n".join(text[:-1] + [text[-1][: len(text[-1]) // 2]])
        p.write_text(bad + "\n")
        with pytest.raises(ParseError) as e:
            load_cohort(p)
        assert e.value.line == len(text)

    def test_unknown_version(self, tmp_path):
        p = tmp_path / "cohort.jsonl"
        p.write_text('{"schema_version": 99}\n')
        with pytest.raises(VersionError):
            load_cohort(p)


class TestGenerator:
    def test_determinism_byte_identical(self, tmp_path):
        from sepsim.synth import generate_synthetic_cohort
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_cohort(generate_synthetic_cohort(21, 40), a)
        save_cohort(generate_synthetic_cohort(21, 40), b)
        assert a.read_bytes() == b.read_bytes()

    def test_marginals_and_lengths(self):
        from sepsim.features import IDX
        from sepsim.synth import generate_synthetic_cohort
        c = generate_synthetic_cohort(5, 250)
        vals = np.concatenate([t.values_matrix() for t in c.trajectories])
        assert np.nanmin(vals[:, IDX["meanbp"]]) >= 30 and np.nanmax(vals[:, IDX["meanbp"]]) <= 140
        assert np.nanmin(vals[:, IDX["lactate"]]) >= 0.3 and np.nanmax(vals[:, IDX["lactate"]]) <= 20
        lens = [len(t) for t in c.trajectories]
        assert 10.0 < np.mean(lens) < 13.0
        sofa = vals[:, IDX["sofa"]]
        assert np.all((sofa >= 0) & (sofa <= 24)) and np.all(sofa == np.round(sofa))

    def test_action_consistency_invariant(self):
        from sepsim.synth import generate_synthetic_cohort
        c = generate_synthetic_cohort(5, 30)
        for t in c.trajectories:
            for i, s in enumerate(t.steps):
                assert discretize_action(s.doses, c.disc) == s.action
                assert s.hour == 4 * i

    def test_bin_balance(self):
        from sepsim.synth import generate_synthetic_cohort
        c = generate_synthetic_cohort(9, 400)
        train = c.split("train")
        for axis in ("vaso_bin", "fluid_bin"):
            bins = [getattr(s.action, axis) for t in train for s in t.steps
                    if getattr(s.action, axis) > 0]
            assert len(bins) >= 1000
            for k in (1, 2, 3, 4):
                frac = np.mean(np.array(bins) == k)
                assert abs(frac - 0.25) < 0.02

    def test_invalid_config(self):
        from sepsim.errors import ConfigError
        from sepsim.synth import SynthConfig
        with pytest.raises(ConfigError):
            SynthConfig(adherence_target=1.4)
        with pytest.raises(ConfigError):
            SynthConfig(split=(0.5, 0.2, 0.2))

    def test_demo_admission(self):
        from sepsim.safety import is_septic_shock
        from sepsim.synth import demo_admission
        t = demo_admission()
        s = t.steps[0]
        assert s.values[IDX["meanbp"]] == pytest.approx(69.8)
        assert s.values[IDX["lactate"]] == pytest.approx(2.6)
        assert not is_septic_shock(s.values, current_vaso_level=0.0)
