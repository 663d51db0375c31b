import numpy as np
import pytest

from askewsgd import (AnnealSchedule, ConstraintParams, Iterate, LogisticModel,
                      MoonsMlpModel, QuadraticToyModel, QuantGrid,
                      RunAbortError, StepSchedule, askew_step, bc_ste_step,
                      evaluate_quantized, feasibility_gap, gen_logistic,
                      gen_two_moons, project_to_grid, projected_sgd_step,
                      run_training, sgd_step)
from askewsgd.harness import exhaustive_table

GRID10 = QuantGrid.binary(10)
P03 = ConstraintParams(epsilon=0.3, alpha=1.0, m_clip=1.0)


@pytest.fixture(scope="module")
def logistic_problem():
    data, w_true = gen_logistic(n=1200, d=10, seed=0)
    return LogisticModel(10), data, w_true


class TestSteps:
    def test_interior_equals_sgd(self, logistic_problem):
        model, data, _ = logistic_problem
        batch = (data.features[:100], data.labels[:100])
        params = ConstraintParams(epsilon=1.0, alpha=1.0, m_clip=1.0)
        w0 = np.full(10, 0.9)  # strictly inside the wide feasible band
        a, _ = askew_step(model, batch, Iterate(w=w0.copy()), params, GRID10, 0.5)
        s, _ = sgd_step(model, batch, Iterate(w=w0.copy()), 0.5)
        np.testing.assert_array_equal(a.w, s.w)

    def test_zero_step_size_is_noop(self, logistic_problem):
        model, data, _ = logistic_problem
        batch = (data.features[:50], data.labels[:50])
        w0 = np.linspace(-1, 1, 10)
        it, _ = askew_step(model, batch, Iterate(w=w0.copy()), P03, GRID10, 0.0)
        np.testing.assert_array_equal(it.w, w0)

    def test_projected_projects(self, logistic_problem):
        model, data, _ = logistic_problem
        batch = (data.features[:50], data.labels[:50])
        it, _ = projected_sgd_step(model, batch, Iterate(w=np.full(10, 0.3)),
                                   GRID10, 0.1)
        assert set(np.unique(it.w)) <= {-1.0, 1.0}

    def test_projection_fixed_point_zero_gradient(self):
        # projecting twice with no gradient keeps the grid point
        model = QuadraticToyModel(center=(1.0, -1.0))
        grid = QuantGrid.binary(2)
        it = Iterate(w=np.array([0.3, -0.2]))
        it, _ = projected_sgd_step(model, None, it, grid, 0.0)
        assert it.w.tolist() == [1.0, -1.0]
        it, _ = projected_sgd_step(model, None, it, grid, 0.1)
        assert it.w.tolist() == [1.0, -1.0]

    def test_bc_gradient_taken_at_projection(self, logistic_problem):
        model, data, _ = logistic_problem
        X, y = data.features[:200], data.labels[:200]
        w0 = np.full(10, 0.3)
        it, _ = bc_ste_step(model, (X, y), Iterate(w=w0.copy()), GRID10, 0.5)
        expected = w0 - 0.5 * model.grad(project_to_grid(GRID10, w0), X, y)
        expected = np.clip(expected, -1.0, 1.0)
        np.testing.assert_array_equal(it.w, expected)

    def test_bc_latent_clipped_to_level_range(self, logistic_problem):
        model, data, _ = logistic_problem
        batch = (data.features[:200], data.labels[:200])
        it = Iterate(w=np.full(10, 0.999))
        it, _ = bc_ste_step(model, batch, it, GRID10, 50.0)
        assert np.abs(it.w).max() <= 1.0

    def test_nan_gradient_aborts(self):
        model = LogisticModel(2)
        X = np.array([[np.inf, 0.0]])
        y = np.array([1])
        with pytest.raises(RunAbortError):
            sgd_step(model, (X, y), Iterate(w=np.zeros(2), k=7), 1.0)


class TestEvaluateQuantized:
    def test_on_grid_equals_plain_loss(self, logistic_problem):
        model, data, w_true = logistic_problem
        loss, acc = evaluate_quantized(model, data, GRID10, w_true)
        assert loss == model.loss(w_true, data.features, data.labels)
        assert 0.5 < acc <= 1.0

    def test_true_vector_is_plug_in_optimum_nearby(self, logistic_problem):
        # evaluating at the generating vertex beats evaluating at its sign flip
        model, data, w_true = logistic_problem
        base, _ = evaluate_quantized(model, data, GRID10, w_true)
        flipped = w_true.copy()
        flipped[0] = -flipped[0]
        worse, _ = evaluate_quantized(model, data, GRID10, flipped)
        assert base < worse

    def test_matches_exhaustive_row(self):
        train, test = gen_two_moons(n_train=120, n_test=40, seed=1)
        model = MoonsMlpModel()
        grid = QuantGrid.binary(9)
        rows, best = exhaustive_table(model, grid, train, test)
        w = np.array([best[f"w{i}"] for i in range(9)])
        loss, _ = evaluate_quantized(model, test, grid, w)
        assert loss == best["test_loss"]


class TestRunTraining:
    def test_loss_decreases_single_episode(self, logistic_problem):
        model, data, _ = logistic_problem
        res = run_training(model, data, optimizer="askew", grid=GRID10,
                           params=ConstraintParams(epsilon=1.0, alpha=1.0, m_clip=1.0),
                           steps=StepSchedule.constant(1.0), epochs=3,
                           batch_size=200, seed=0, eval_cadence=0,
                           snapshot_every=0, log_full_train_loss=True)
        assert res.records[-1].train_loss < res.records[0].train_loss

    def test_epsilon_sequence_logged_per_episode(self, logistic_problem):
        model, data, _ = logistic_problem
        anneal = AnnealSchedule(epsilon0=1.0, decay=0.88)
        res = run_training(model, data, optimizer="askew", grid=GRID10,
                           params=ConstraintParams(epsilon=1.0), steps=StepSchedule.constant(0.5),
                           anneal=anneal, epochs=4, batch_size=600, seed=0,
                           eval_cadence=0, snapshot_every=0)
        by_episode = {}
        for r in res.records:
            by_episode.setdefault(r.episode, set()).add(r.epsilon)
        assert sorted(by_episode) == [0, 1, 2, 3]
        for ep, values in by_episode.items():
            assert values == {pytest.approx(0.88 ** ep)}

    def test_warmup_holds_epsilon(self, logistic_problem):
        model, data, _ = logistic_problem
        anneal = AnnealSchedule(epsilon0=1.0, decay=0.88, warmup=2)
        res = run_training(model, data, optimizer="askew", grid=GRID10,
                           params=ConstraintParams(epsilon=1.0), steps=StepSchedule.constant(0.5),
                           anneal=anneal, epochs=4, batch_size=600, seed=0,
                           eval_cadence=0, snapshot_every=0)
        eps = [r.epsilon for r in res.records]
        per_epoch = len(eps) // 4
        assert eps[0] == eps[per_epoch] == 1.0
        assert eps[2 * per_epoch] == pytest.approx(0.88)

    def test_plateau_trigger_patience(self, logistic_problem):
        model, data, _ = logistic_problem
        anneal = AnnealSchedule(epsilon0=1.0, decay=0.5, trigger="plateau",
                                patience=3, improvement_tol=10.0)
        # huge tolerance: every evaluation counts as non-improving
        res = run_training(model, data, optimizer="askew", grid=GRID10,
                           params=ConstraintParams(epsilon=1.0),
                           steps=StepSchedule.constant(0.1), anneal=anneal,
                           epochs=7, batch_size=600, seed=0, eval_cadence=1,
                           snapshot_every=0)
        episodes = [r.episode for r in res.records]
        assert max(episodes) == 2  # decays after evals 3 and 6
        eps_final = res.records[-1].epsilon
        assert eps_final == pytest.approx(0.25)

    def test_seeded_determinism(self, logistic_problem):
        model, data, _ = logistic_problem
        kwargs = dict(optimizer="askew", grid=GRID10,
                      params=ConstraintParams(epsilon=0.5, alpha=2.0),
                      steps=StepSchedule.inverse_power(1.0, 0.6),
                      anneal=AnnealSchedule(epsilon0=0.5, decay=0.88),
                      epochs=3, batch_size=300, seed=11,
                      eval_cadence=1, snapshot_every=1)
        a = run_training(model, data, **kwargs)
        b = run_training(model, data, **kwargs)
        np.testing.assert_array_equal(a.w_final, b.w_final)
        for ra, rb in zip(a.records, b.records):
            assert ra.train_loss == rb.train_loss
            assert ra.feasibility_gap == rb.feasibility_gap
            assert ra.eval_loss == rb.eval_loss

    def test_interior_run_identical_to_sgd(self, logistic_problem):
        # a wide slack keeps every iterate interior: the constrained run
        # must reproduce plain SGD bit for bit on matched seeds
        model = QuadraticToyModel()
        grid = QuantGrid.binary(2)
        shared = dict(steps=StepSchedule.constant(0.05), epochs=5,
                      batch_size=1, seed=3, eval_cadence=0, snapshot_every=0,
                      w0=np.array([0.4, 0.6]))
        a = run_training(model, None, optimizer="askew", grid=grid,
                         params=ConstraintParams(epsilon=1.0, alpha=1.0), **shared)
        s = run_training(model, None, optimizer="sgd", **shared)
        np.testing.assert_array_equal(a.w_final, s.w_final)

    def test_divergence_guard(self):
        model = QuadraticToyModel(center=(50.0, 50.0), scale=10.0)
        grid = QuantGrid.binary(2)
        with pytest.raises(RunAbortError):
            run_training(model, None, optimizer="askew", grid=grid,
                         params=ConstraintParams(epsilon=1.0, alpha=1.0, m_clip=1.0),
                         steps=StepSchedule.constant(100.0), epochs=200,
                         batch_size=1, seed=0, eval_cadence=0, snapshot_every=0)

    def test_epsilon_validated_against_grid(self):
        model = LogisticModel(2)
        data, _ = gen_logistic(n=50, d=2, seed=0)
        grid = QuantGrid.uniform_int(4, 2)
        from askewsgd import ConfigError
        with pytest.raises(ConfigError):
            run_training(model, data, optimizer="askew", grid=grid,
                         params=ConstraintParams(epsilon=0.3), epochs=1,
                         batch_size=10, seed=0)

    def test_final_signs_stable_after_annealing(self, logistic_problem):
        model, data, _ = logistic_problem
        res = run_training(model, data, optimizer="askew", grid=GRID10,
                           params=ConstraintParams(epsilon=1.0, alpha=1.0),
                           steps=StepSchedule.constant(1.0),
                           anneal=AnnealSchedule(epsilon0=1.0, decay=0.88, warmup=10),
                           epochs=40, batch_size=300, seed=0,
                           eval_cadence=0, snapshot_every=1)
        steps_total = res.records[-1].step
        earlier = next(w for k, w in res.snapshots if k >= steps_total - 1000)
        ham = (project_to_grid(GRID10, np.asarray(earlier))
               != project_to_grid(GRID10, res.w_final)).sum()
        assert ham == 0

    def test_gap_converges_with_theorem_schedule(self, logistic_problem):
        model, data, _ = logistic_problem
        res = run_training(model, data, optimizer="askew", grid=GRID10,
                           params=P03,
                           steps=StepSchedule.inverse_power(1.0, 0.6,
                                                            theorem_compliant=True),
                           epochs=30, batch_size=300, seed=0,
                           eval_cadence=0, snapshot_every=0)
        assert feasibility_gap(P03, GRID10, res.w_final) <= 1e-3
