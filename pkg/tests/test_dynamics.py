"""Monte Carlo layer: flip rule, kernel parity, exchange moves, observables."""

import math

import numpy as np
import pytest

from photonic_hopfield.dynamics import (
    EMC,
    MCState,
    Schedule,
    Trajectory,
    _candidate_pr,
    _decide_flip,
    advance,
    exchange_sweep,
    geometric_ladder,
    mc_step,
    measurement_noise,
    run_emc,
    self_correlation,
    thermal_fluctuation,
    update_time_per_flip,
)
from photonic_hopfield.model import fully_bunched_probability, sample_instance
from photonic_hopfield.seeding import split_seed


def make_state(M=12, P=5, T=0.3, seed=7, state_seed=11):
    inst = sample_instance(M, 2, P, seed, 0)
    return inst, MCState.initialize(inst, T, state_seed)


def freeze(state):
    return state.sigma.copy(), state.cache.fields.copy(), state.pr


def restore(state, snap):
    state.sigma[:] = snap[0]
    state.cache.fields[:] = snap[1]
    state.pr = snap[2]


class TestFlipRule:
    def test_candidate_pr_matches_exact_probability(self):
        inst, state = make_state()
        for i in range(inst.M):
            pn = _candidate_pr(state.cache, state.sigma[i], i)
            flipped = state.sigma.copy()
            flipped[i] *= -1
            exact = fully_bunched_probability(inst.S, flipped, inst.out_set.modes, 2)
            assert pn == pytest.approx(exact, abs=1e-13)

    def test_downhill_always_accepted(self):
        inst, state = make_state(T=0.2)
        found = 0
        for i in range(inst.M):
            pn = _candidate_pr(state.cache, state.sigma[i], i)
            if pn >= state.pr:  # dH = -M (pn - pr) <= 0
                snap = freeze(state)
                assert _decide_flip(state, i, u=1.0 - 1e-16)
                restore(state, snap)
                found += 1
        assert found > 0

    def test_rejection_leaves_state_bit_identical(self):
        inst, state = make_state(T=1e-6)
        rejected = 0
        for i in range(inst.M):
            pn = _candidate_pr(state.cache, state.sigma[i], i)
            if pn < state.pr:  # uphill; e^{-dH/T} ~ 0 at this T
                sig0, f0, pr0 = freeze(state)
                assert not _decide_flip(state, i, u=0.999999)
                assert np.array_equal(state.sigma, sig0)
                assert np.array_equal(state.cache.fields, f0)
                assert state.pr == pr0
                rejected += 1
        assert rejected > 0

    def test_acceptance_frequency_matches_boltzmann(self):
        # empirical accept rate per site vs min(1, e^{-dH/T}) within 4 sigma
        inst, state = make_state(M=10, P=4, T=0.25, seed=3, state_seed=5)
        rng = np.random.default_rng(0)
        n = 3000
        base = freeze(state)
        for i in range(inst.M):
            pn = _candidate_pr(state.cache, state.sigma[i], i)
            dH = -inst.M * (pn - state.pr)
            p_expect = min(1.0, math.exp(-dH / state.temperature))
            hits = 0
            for u in rng.random(n):
                if _decide_flip(state, i, float(u)):
                    hits += 1
                    restore(state, base)
            sigma_bin = math.sqrt(max(p_expect * (1 - p_expect), 1e-12) / n)
            assert abs(hits / n - p_expect) < 4 * sigma_bin + 1e-9

    def test_zero_temperature_never_climbs(self):
        inst, state = make_state(T=0.0)
        prs = [state.pr]
        for _ in range(150):
            mc_step(state, inst)
            prs.append(state.pr)
        assert np.all(np.diff(prs) >= 0.0)

    def test_flip_consumes_one_uniform_even_when_downhill(self):
        # stream alignment: metropolis_flip must always draw exactly one u
        inst, state = make_state()
        before = state.rng.bit_generator.state["state"]["state"]
        from photonic_hopfield.dynamics import metropolis_flip

        metropolis_flip(state, inst, 0)
        after = state.rng.bit_generator.state["state"]["state"]
        assert before != after
        clone = np.random.default_rng()
        clone.bit_generator.state = state.rng.bit_generator.state
        # next draw matches a fresh draw from the cloned stream
        assert state.rng.random() == clone.random()


class TestKernelParity:
    def test_kernel_matches_reference_and_mc_step(self):
        inst, _ = make_state(M=14, P=6)
        n_steps = 40
        runs = {}
        for label, use_kernel in (("kernel", True), ("reference", False)):
            st = MCState.initialize(inst, 0.3, 42)
            tr, _ = advance(st, inst, n_steps, record_pr=True, use_kernel=use_kernel)
            runs[label] = (st.sigma.copy(), st.pr, tr.copy())
        st = MCState.initialize(inst, 0.3, 42)
        loop_tr = np.empty(n_steps)
        for s in range(n_steps):
            mc_step(st, inst)
            loop_tr[s] = st.pr
        runs["loop"] = (st.sigma.copy(), st.pr, loop_tr)
        for label in ("reference", "loop"):
            assert np.array_equal(runs["kernel"][0], runs[label][0]), label
            assert runs["kernel"][1] == runs[label][1], label
            assert np.array_equal(runs["kernel"][2], runs[label][2]), label

    def test_pr_trace_tracks_state(self):
        inst, state = make_state()
        tr, _ = advance(state, inst, 30, record_pr=True)
        assert tr[-1] == state.pr
        assert np.all((tr >= 0.0) & (tr <= 1.0))

    def test_split_advance_equals_single_call(self):
        inst, _ = make_state()
        a = MCState.initialize(inst, 0.3, 9)
        _, snaps_one = advance(a, inst, 10, snap_stride=3)
        b = MCState.initialize(inst, 0.3, 9)
        _, s1 = advance(b, inst, 4, snap_stride=3)
        _, s2 = advance(b, inst, 6, snap_stride=3)  # phase defaults to step_count
        assert np.array_equal(snaps_one, np.vstack([s1, s2]))
        assert np.array_equal(a.sigma, b.sigma)
        assert a.pr == b.pr

    def test_snapshot_count_follows_stride_phase(self):
        inst, state = make_state()
        _, snaps = advance(state, inst, 10, snap_stride=4, phase_offset=2)
        # global steps 3..12, snapshots at 4, 8, 12
        assert snaps.shape == (3, inst.M)
        assert set(np.unique(snaps)) <= {-1, 1}


class TestSchedule:
    def test_ladder_must_increase(self):
        with pytest.raises(ValueError):
            Schedule(temperatures=(0.3, 0.3))
        with pytest.raises(ValueError):
            Schedule(temperatures=(0.5, 0.1))
        with pytest.raises(ValueError):
            Schedule(temperatures=())

    def test_positive_temperatures_and_intervals(self):
        with pytest.raises(ValueError):
            Schedule(temperatures=(0.0, 0.1))
        with pytest.raises(ValueError):
            Schedule(temperatures=(0.1,), exchange_interval=0)
        with pytest.raises(ValueError):
            Schedule(temperatures=(0.1,), n_therm=-1)

    def test_geometric_ladder(self):
        t = geometric_ladder(0.05, 0.6, 12)
        assert len(t) == 12
        assert t[0] == pytest.approx(0.05) and t[-1] == pytest.approx(0.6)
        r = np.diff(np.log(t))
        assert np.allclose(r, r[0])
        assert geometric_ladder(0.2, 0.9, 1) == (0.2,)


class FakeRng:
    """Scripted uniform stream for deterministic swap decisions."""

    def __init__(self, vals):
        self.vals = list(vals)

    def random(self):
        return self.vals.pop(0)


class TestExchange:
    def test_equal_energy_swap_is_certain(self):
        inst, a = make_state(T=0.1, state_seed=1)
        b = MCState.initialize(inst, 0.4, 1)  # same seed: same sigma
        sig = a.sigma.copy()
        a.sigma[:] = sig
        b.sigma[:] = sig.copy()
        b.cache.fields[:] = a.cache.fields
        b.pr = a.pr
        obj_a, obj_b = a.sigma, b.sigma
        exchange_sweep([a, b], FakeRng([]))  # logp = 0, no draw needed
        assert a.sigma is obj_b and b.sigma is obj_a
        assert a.temperature == 0.1 and b.temperature == 0.4

    def test_unfavorable_swap_follows_scripted_uniform(self):
        inst, a = make_state(T=0.1, state_seed=1)
        b = MCState.initialize(inst, 0.4, 2)
        # arrange E_a < E_b so logp < 0 (cold replica already lower)
        if a.pr < b.pr:
            a, b = b, a
            a.temperature, b.temperature = 0.1, 0.4
        ea, eb = -inst.M * a.pr, -inst.M * b.pr
        logp = (1 / 0.1 - 1 / 0.4) * (ea - eb)
        assert logp < 0
        p = math.exp(logp)
        sig_a = a.sigma
        exchange_sweep([a, b], FakeRng([(1.0 + p) / 2.0]))  # u >= p: no swap
        assert a.sigma is sig_a
        exchange_sweep([a, b], FakeRng([p * 0.5]))  # u < p: swap
        assert b.sigma is sig_a

    def test_parity_selects_pairs(self):
        inst, _ = make_state()
        reps = [MCState.initialize(inst, T, 1) for T in (0.1, 0.2, 0.4)]
        for r in reps[1:]:  # clone config so every pair swap is certain
            r.sigma = reps[0].sigma.copy()
            r.cache.fields = reps[0].cache.fields.copy()
            r.pr = reps[0].pr
        tags = [id(r.sigma) for r in reps]
        exchange_sweep(reps, FakeRng([]), parity=0)  # swaps (0,1) only
        assert [id(r.sigma) for r in reps] == [tags[1], tags[0], tags[2]]
        exchange_sweep(reps, FakeRng([]), parity=1)  # swaps (1,2) only
        assert [id(r.sigma) for r in reps] == [tags[1], tags[2], tags[0]]

    def test_requires_sorted_ladder(self):
        inst, a = make_state(T=0.4)
        b = MCState.initialize(inst, 0.1, 3)
        with pytest.raises(ValueError):
            exchange_sweep([a, b], FakeRng([0.5]))

    def test_single_replica_is_noop(self):
        inst, a = make_state()
        sig = a.sigma
        exchange_sweep([a], FakeRng([]))
        assert a.sigma is sig


class TestEMC:
    SCHED = Schedule(temperatures=(0.1, 0.25, 0.5), n_therm=60, n_measure=80,
                     exchange_interval=25, snapshot_stride=20)

    def test_deterministic_given_seed(self):
        inst, _ = make_state()
        t1 = run_emc(inst, self.SCHED, n_replica_groups=2, seed=5)
        t2 = run_emc(inst, self.SCHED, n_replica_groups=2, seed=5)
        t3 = run_emc(inst, self.SCHED, n_replica_groups=2, seed=6)
        for a, b in zip(t1, t2):
            assert np.array_equal(a.pr, b.pr)
            assert np.array_equal(a.spins, b.spins)
        assert any(not np.array_equal(a.pr, c.pr) for a, c in zip(t1, t3))

    def test_trajectory_layout(self):
        inst, _ = make_state()
        trajs = run_emc(inst, self.SCHED, n_replica_groups=2, seed=5)
        assert len(trajs) == 2 * 3
        for tr in trajs:
            assert len(tr) == 80
            assert tr.spins.shape == (80 // 20, inst.M)
            assert set(np.unique(tr.spins)) <= {-1, 1}
            assert np.array_equal(tr.energy, -inst.M * tr.pr)
        temps = sorted({tr.temperature for tr in trajs})
        assert temps == [0.1, 0.25, 0.5]

    def test_single_temperature_emc_is_plain_metropolis(self):
        # one-rung ladder: EMC must reproduce the raw mc_step sequence
        inst, _ = make_state()
        sched = Schedule(temperatures=(0.3,), n_therm=30, n_measure=50,
                         exchange_interval=20, snapshot_stride=10)
        (traj,) = run_emc(inst, sched, n_replica_groups=1, seed=9)
        state = MCState.initialize(inst, 0.3, split_seed(9, "dynamics", 0, 0))
        for _ in range(30):
            mc_step(state, inst)
        prs, snaps = [], []
        for s in range(50):
            mc_step(state, inst)
            prs.append(state.pr)
            if (s + 1) % 10 == 0:
                snaps.append(state.sigma.astype(np.int8))
        assert np.array_equal(traj.pr, prs)
        assert np.array_equal(traj.spins, np.array(snaps))

    def test_checkpoint_restore_resumes_exactly(self):
        inst, _ = make_state()
        grabbed = {}

        def hook(emc):
            if emc.sweep_count == 2 and "snap" not in grabbed:
                grabbed["snap"] = emc.snapshot_state()

        base = EMC(inst, self.SCHED, n_groups=2, seed=5)
        ref = base.run(checkpoint_hook=hook)
        resumed = EMC(inst, self.SCHED, n_groups=2, seed=5)
        resumed.restore_state(grabbed["snap"])
        assert resumed.steps_done == 50  # snapshot taken after the 2nd sweep
        out = resumed.run()
        for a, b in zip(ref, out):
            assert np.array_equal(a.pr, b.pr)
            assert np.array_equal(a.spins, b.spins)

    def test_consistency_check_trips_on_corruption(self):
        inst, _ = make_state()
        emc = EMC(inst, self.SCHED, n_groups=1, seed=5)
        emc.replicas[0][0].pr += 1e-3
        with pytest.raises(RuntimeError):
            emc._consistency_check()

    def test_group_count_validation(self):
        inst, _ = make_state()
        with pytest.raises(ValueError):
            EMC(inst, self.SCHED, n_groups=0, seed=5)


def flat_traj(spins, stride=1):
    spins = np.asarray(spins, dtype=np.int8)
    return Trajectory(group=0, temp_index=0, temperature=0.3,
                      pr=np.zeros(len(spins)), spins=spins,
                      snapshot_stride=stride)


class TestObservableHelpers:
    def test_self_correlation_basics(self):
        tr = flat_traj(np.ones((40, 6)))
        assert self_correlation(tr, 0) == 1.0
        assert self_correlation(tr, 17) == 1.0

    def test_self_correlation_alternating(self):
        rows = np.array([[1, -1] * 3, [-1, 1] * 3] * 10)
        tr = flat_traj(rows)
        assert self_correlation(tr, 1) == -1.0
        assert self_correlation(tr, 2) == 1.0

    def test_self_correlation_requires_unit_stride(self):
        tr = flat_traj(np.ones((10, 4)), stride=5)
        with pytest.raises(ValueError):
            self_correlation(tr, 1)

    def test_self_correlation_range_check(self):
        tr = flat_traj(np.ones((10, 4)))
        with pytest.raises(ValueError):
            self_correlation(tr, 10)
        with pytest.raises(ValueError):
            self_correlation(tr, -1)

    def test_measurement_noise_formula(self):
        assert measurement_noise(0.5, 10_000) == pytest.approx(0.005)
        assert measurement_noise(0.0, 100) == 0.0
        assert measurement_noise(1.0, 100) == 0.0
        for pr in (0.01, 0.1, 0.37):
            assert measurement_noise(pr, 2000) == pytest.approx(
                math.sqrt(pr * (1 - pr) / 2000))

    def test_measurement_noise_validation(self):
        with pytest.raises(ValueError):
            measurement_noise(1.2, 100)
        with pytest.raises(ValueError):
            measurement_noise(0.5, 0)

    def test_thermal_fluctuation(self):
        tr = flat_traj(np.ones((5, 3)))
        tr.pr = np.array([0.2, 0.2, 0.2, 0.2, 0.2])
        assert thermal_fluctuation(tr) == 0.0
        tr.pr = np.array([0.1, 0.3, 0.1, 0.3])
        assert thermal_fluctuation(tr) == pytest.approx(np.diff(tr.pr).std())
        tr.pr = np.array([0.1])
        with pytest.raises(ValueError):
            thermal_fluctuation(tr)

    def test_fluctuation_grows_with_temperature(self):
        inst, _ = make_state(M=16, P=8)
        sigmas = {}
        for T in (0.05, 0.6):
            sched = Schedule(temperatures=(T,), n_therm=300, n_measure=400,
                             exchange_interval=100, snapshot_stride=400)
            trajs = run_emc(inst, sched, n_replica_groups=3, seed=2)
            sigmas[T] = np.mean([thermal_fluctuation(t) for t in trajs])
        assert sigmas[0.6] > sigmas[0.05]

    def test_update_timer_returns_sane_value(self):
        inst, _ = make_state(M=10, P=4)
        dt = update_time_per_flip(inst, n_steps=30, repeats=1)
        assert 0.0 < dt < 1e-3


class TestStateValidation:
    def test_requires_fast_path_instance(self):
        from photonic_hopfield.linops import enumerate_configs
        from photonic_hopfield.model import ExplicitOutputs, ModelInstance
        from photonic_hopfield.linops import haar_random_unitary

        M = 5
        out = ExplicitOutputs(tuple(enumerate_configs(M, 2)[:3]))
        inst = ModelInstance(M=M, n_ph=2, S=haar_random_unitary(M, 0), out_set=out)
        with pytest.raises(ValueError):
            MCState.initialize(inst, 0.3, 0)

    def test_energy_is_minus_m_pr(self):
        inst, state = make_state()
        assert state.energy() == pytest.approx(-inst.M * state.pr, rel=1e-14)
