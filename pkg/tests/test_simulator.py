"""Event-driven contact-process simulation and empirical moments."""

import numpy as np
import pytest

from contactlab.criticality import calibrate, solve_ground_state, ground_transform
from contactlab.errors import ModelError
from contactlab.hierarchy import evolve_hierarchy
from contactlab.model import Kernel, RateModel, build_space
from contactlab.simulator import (empirical_correlations, run_replicas,
                                  sample_poisson_initial, simulate_contact)

from conftest import random_finite_model


def one_point_critical():
    space = build_space({"type": "finite", "points": [0], "weights": [1.0]})
    model = RateModel(birth=Kernel("dense", matrix=np.array([[1.0]])),
                      death=np.ones(1))
    tm, _, _ = calibrate(model, space)
    return tm


class TestSimulateContact:
    def test_pure_death_extinction_time(self):
        space = build_space({"type": "finite", "points": [0], "weights": [1.0]})
        model = RateModel(birth=Kernel("dense", matrix=np.zeros((1, 1))),
                          death=np.ones(1))
        from contactlab.criticality import TransformedModel
        tm = TransformedModel(space=space, b=np.zeros((1, 1)),
                              mbar=space.weights, death=model.death,
                              psi=np.ones(1))
        rng = np.random.default_rng(0)
        n = 20000
        times = np.empty(n)
        for i in range(n):
            log = simulate_contact(tm, [1], 50.0, [], rng, keep_events=True)
            times[i] = log.events[0][0]
        se = times.std(ddof=1) / np.sqrt(n)
        assert abs(times.mean() - 1.0) <= 3.5 * se

    def test_single_death_event(self):
        from contactlab.criticality import TransformedModel
        space = build_space({"type": "finite", "points": [0], "weights": [1.0]})
        tm = TransformedModel(space=space, b=np.zeros((1, 1)),
                              mbar=space.weights, death=np.ones(1),
                              psi=np.ones(1))
        log = simulate_contact(tm, [1], 1000.0, [], np.random.default_rng(1))
        assert len(log.events) == 1
        assert log.events[0][1] == "death"
        assert log.final_counts[0] == 0

    def test_critical_branching_mean(self):
        tm = one_point_critical()
        rng = np.random.default_rng(2)
        n = 20000
        finals = np.empty(n)
        for i in range(n):
            log = simulate_contact(tm, [1], 1.0, [], rng, keep_events=False)
            finals[i] = log.final_counts[0]
        se = finals.std(ddof=1) / np.sqrt(n)
        assert abs(finals.mean() - 1.0) <= 3.5 * se

    def test_snapshots_and_nonnegativity(self, finite4_critical):
        rng = np.random.default_rng(3)
        log = simulate_contact(finite4_critical, [2, 1, 0, 3], 2.0,
                               [0.5, 1.0, 2.0], rng)
        assert set(log.snapshots) == {0.5, 1.0, 2.0}
        for snap in log.snapshots.values():
            assert np.all(snap >= 0)
        times = [e[0] for e in log.events]
        assert all(a <= b for a, b in zip(times, times[1:]))

    def test_event_cap_truncates(self, finite4_critical):
        rng = np.random.default_rng(4)
        log = simulate_contact(finite4_critical, [20, 20, 20, 20], 100.0,
                               [], rng, event_cap=50, keep_events=False)
        assert log.truncated


class TestEmpiricalCorrelations:
    def test_poisson_initial_moments(self, finite4_critical):
        tm = finite4_critical
        rho = 0.8
        logs = run_replicas(tm, rho, 0.0, [0.0], 4000, seed=5)
        k1 = empirical_correlations(logs, tm.space, 0.0, 1, tm.mbar)
        k2 = empirical_correlations(logs, tm.space, 0.0, 2, tm.mbar)
        assert np.all(np.abs(k1.values - rho) <= 3.5 * k1.stderr)
        assert np.all(np.abs(k2.values - rho ** 2) <=
                      3.5 * np.maximum(k2.stderr, 1e-12))

    def test_deterministic_single_particle(self, finite4_critical):
        tm = finite4_critical
        space = tm.space
        counts = np.zeros(4, dtype=int)
        counts[2] = 1
        from contactlab.simulator import EventLog
        logs = [EventLog(events=[], snapshots={0.0: counts.copy()})
                for _ in range(200)]
        k1 = empirical_correlations(logs, space, 0.0, 1, tm.mbar)
        k2 = empirical_correlations(logs, space, 0.0, 2, tm.mbar)
        assert k1.values[2] == pytest.approx(1.0 / tm.mbar[2])
        assert k2.values[2, 2] == 0.0

    def test_insufficient_replicas_rejected(self, finite4_critical):
        logs = run_replicas(finite4_critical, 0.5, 0.0, [0.0], 50, seed=6)
        with pytest.raises(ModelError):
            empirical_correlations(logs, finite4_critical.space, 0.0, 1,
                                   finite4_critical.mbar)

    def test_falling_factorial_order3(self, finite4_critical):
        tm = finite4_critical
        from contactlab.simulator import EventLog
        counts = np.array([3, 0, 0, 0])
        logs = [EventLog(events=[], snapshots={0.0: counts.copy()})
                for _ in range(150)]
        k3 = empirical_correlations(logs, tm.space, 0.0, 3, tm.mbar)
        assert k3.values[0, 0, 0] == pytest.approx(3 * 2 * 1 / tm.mbar[0] ** 3)


class TestHierarchyAgreement:
    def test_k1_conserved_critical(self, finite4_critical):
        tm = finite4_critical
        rho = 0.5
        logs = run_replicas(tm, rho, 1.0, [1.0], 8000, seed=7)
        k1 = empirical_correlations(logs, tm.space, 1.0, 1, tm.mbar)
        assert np.all(np.abs(k1.values - rho) <= 3.5 * k1.stderr)

    def test_two_point_matches_dense_evolve(self):
        rng = np.random.default_rng(8)
        space, model = random_finite_model(rng, size=2)
        tm, _, _ = calibrate(model, space)
        rho, T = 0.5, 1.0
        logs = run_replicas(tm, rho, T, [T], 8000, seed=9)
        res = evolve_hierarchy(tm, rho, 2, T, dt=0.02)
        t2, traj2 = res[2]
        i = int(np.argmin(np.abs(t2 - T)))
        k2_hat = empirical_correlations(logs, space, T, 2, tm.mbar)
        z = (k2_hat.values - traj2[i].values) / np.maximum(k2_hat.stderr, 1e-12)
        assert np.abs(z).max() <= 3.5

    def test_death_rate_audit(self, finite4_critical):
        # empirical deaths per particle-time match V
        tm = finite4_critical
        rng = np.random.default_rng(10)
        deaths = np.zeros(4)
        exposure = np.zeros(4)
        for _ in range(400):
            log = simulate_contact(tm, [2, 2, 2, 2], 1.0, [], rng)
            t_prev = 0.0
            counts = np.array([2, 2, 2, 2], dtype=float)
            for (t, kind, pt) in log.events:
                exposure += counts * (t - t_prev)
                t_prev = t
                if kind == "death":
                    deaths[pt[0]] += 1
                    counts[pt[0]] -= 1
                elif kind == "birth":
                    counts[pt[0]] += 1
            exposure += counts * (1.0 - t_prev)
        rate = deaths / exposure
        se = np.sqrt(deaths) / exposure
        assert np.all(np.abs(rate - tm.death) <= 3.5 * se)


class TestJumpExtension:
    def test_psi_profile_conserved(self):
        # symmetric jump kernel on a homogeneous critical model (psi = 1):
        # the jump-extended balance holds and the density is conserved
        from contactlab.criticality import jump_criticality_residual
        from conftest import nearest_stencil
        space = build_space({"type": "lattice", "d": 1, "R": 2,
                             "boundary": "periodic"})
        J = Kernel("stencil", stencil={k: 0.4 * v for k, v
                                       in nearest_stencil(1).items()})
        model = RateModel(birth=Kernel("stencil", stencil=nearest_stencil(1)),
                          death=np.ones(space.size), jump=J)
        gs = solve_ground_state(model, space)
        assert jump_criticality_residual(model, space, gs) <= 1e-10
        tm = ground_transform(model, space, gs)
        rho = 0.6
        logs = run_replicas(tm, rho, 1.5, [1.5], 8000, seed=12)
        k1 = empirical_correlations(logs, space, 1.5, 1, tm.mbar)
        assert np.all(np.abs(k1.values - rho) <= 3.5 * k1.stderr)


class TestReproducibility:
    def test_same_seed_same_logs(self, finite4_critical):
        a = run_replicas(finite4_critical, 0.5, 1.0, [1.0], 50, seed=42)
        b = run_replicas(finite4_critical, 0.5, 1.0, [1.0], 50, seed=42)
        for la, lb in zip(a, b):
            assert np.array_equal(la.final_counts, lb.final_counts)
            assert np.array_equal(la.snapshots[1.0], lb.snapshots[1.0])
