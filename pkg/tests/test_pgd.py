import numpy as np
import pytest

import stacksim as ss
from stacksim.pgd import _quadratic_parts
from conftest import finite_difference_gradient, objective_by_entry_sum, small_stack


def reachable_target(stack):
    """Target produced by a forward pass, so zero residual is feasible."""
    entries = ss.compose_space_block(stack).copy()
    return ss.TargetMatrix(entries=entries, column_norm_sq=float(np.sum(np.abs(entries[:, 0]) ** 2)))


class TestObjective:
    def test_zero_at_exact_match(self):
        stack = small_stack(seed=0)
        assert ss.objective(stack, reachable_target(stack)) == 0.0

    def test_zero_block_gives_target_energy(self):
        stack = ss.build_stack(
            ss.StackDescription(
                input_shape=(2, 1),
                inner_shape=(2, 2),
                output_shape=(2, 2),
                ac_layers=0,
                pc_layers=2,
                upa_shape=(1, 1),
                alpha_pc=0.0,
            )
        )
        target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 4)
        expected = stack.input_size * target.column_norm_sq
        assert ss.objective(stack, target) == pytest.approx(expected, rel=1e-10)

    def test_matches_entry_sum(self):
        stack = small_stack(input_shape=(2, 1), output_shape=(2, 1), seed=1)
        target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 9)
        assert ss.objective(stack, target) == pytest.approx(objective_by_entry_sum(stack, target), rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        stack = small_stack()
        bad = ss.TargetMatrix(entries=np.zeros((3, 7), dtype=complex), column_norm_sq=1.0)
        with pytest.raises(ss.ConfigurationError):
            ss.objective(stack, bad)


class TestLayerFactors:
    def test_terminal_layer_has_identity_downstream(self):
        stack = small_stack(seed=2)
        e_factor, b_factor = ss.layer_factors(stack, stack.layer_count)
        np.testing.assert_array_equal(e_factor, np.eye(stack.output_size))
        assert b_factor.shape == (stack.output_size, stack.input_size)

    def test_first_layer_has_bare_upstream(self):
        stack = small_stack(seed=3)
        _, b_factor = ss.layer_factors(stack, 2)
        np.testing.assert_array_equal(b_factor, stack.tail_matrices()[0])

    def test_factorization_reproduces_composed_columns(self):
        stack = small_stack(input_shape=(2, 1), inner_shape=(3, 1), output_shape=(2, 1), pc_layers=3, seed=4)
        g0 = ss.compose_space_block(stack)
        for layer in stack.space_layers:
            e_factor, b_factor = ss.layer_factors(stack, layer)
            gamma = stack.gamma(layer)
            for z in range(stack.input_size):
                column = e_factor @ (b_factor[:, z] * gamma)
                np.testing.assert_allclose(column, g0[:, z], rtol=1e-12)

    def test_layer_out_of_range(self):
        stack = small_stack()
        with pytest.raises(IndexError):
            ss.layer_factors(stack, 1)
        with pytest.raises(IndexError):
            ss.layer_factors(stack, stack.layer_count + 1)


class TestGradient:
    def test_zero_at_global_minimum(self):
        stack = small_stack(seed=5)
        target = reachable_target(stack)
        for layer in stack.space_layers:
            grad = ss.gradient(stack, target, layer)
            assert np.max(np.abs(grad)) < 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(77)
        for case in range(6):
            stack = small_stack(
                input_shape=(2, 1),
                inner_shape=(2, 2),
                output_shape=(2, 1),
                ac_layers=int(rng.integers(0, 2)),
                pc_layers=int(rng.integers(1, 3)) + 1,
                seed=case,
            )
            target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 50 + case)
            for layer in stack.space_layers:
                analytic = ss.gradient(stack, target, layer)
                numeric = finite_difference_gradient(stack, target, layer)
                scale = max(np.max(np.abs(numeric)), 1e-12)
                assert np.max(np.abs(analytic - numeric)) / scale < 1e-5

    def test_hadamard_coupling_matrix_matches_sum_over_columns(self):
        stack = small_stack(input_shape=(2, 2), inner_shape=(2, 2), output_shape=(2, 1), seed=6)
        target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 31)
        for layer in stack.space_layers:
            e_factor, b_factor = ss.layer_factors(stack, layer)
            a_matrix, v_vector = _quadratic_parts(e_factor, b_factor, target.entries)
            size = b_factor.shape[0]
            a_expected = np.zeros((size, size), dtype=complex)
            v_expected = np.zeros(size, dtype=complex)
            ehe = e_factor.conj().T @ e_factor
            for z in range(stack.input_size):
                d = np.diag(b_factor[:, z])
                a_expected += d.conj() @ ehe @ d
                v_expected += d.conj() @ e_factor.conj().T @ target.entries[:, z]
            np.testing.assert_allclose(a_matrix, a_expected, rtol=1e-12)
            np.testing.assert_allclose(v_vector, v_expected, rtol=1e-12)


class TestProjection:
    BOUNDS = (10 ** (-22 / 20), 10 ** (13 / 20))

    def test_interior_point_unchanged(self):
        assert ss.project_amplitude(np.array([1.0]), self.BOUNDS)[0] == 1.0

    def test_upper_clamp(self):
        assert ss.project_amplitude(np.array([10.0]), self.BOUNDS)[0] == pytest.approx(4.467, abs=1e-3)

    def test_lower_clamp(self):
        assert ss.project_amplitude(np.array([0.0]), self.BOUNDS)[0] == pytest.approx(0.0794, abs=1e-4)

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            ss.project_amplitude(np.array([1.0]), (0.5, 0.1))


class TestRunPgd:
    def test_reachable_target_driven_to_numerical_zero(self):
        stack = small_stack(input_shape=(2, 1), inner_shape=(2, 2), output_shape=(2, 1), seed=11)
        target = reachable_target(stack)
        randomize_seed = 500  # fresh start away from the solution
        config = ss.PgdConfig(max_iterations=4000, relative_tolerance=1e-16, seed=randomize_seed)
        state = ss.run_pgd(stack, target, config)
        assert state.objective_trace[-1] < 1e-12 * state.objective_trace[0]

    def test_monotone_trace_every_seed(self):
        for seed in range(6):
            stack = small_stack(input_shape=(2, 2), inner_shape=(3, 3), output_shape=(2, 2), seed=seed)
            target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, seed)
            state = ss.run_pgd(stack, target, ss.PgdConfig(max_iterations=60, seed=seed))
            assert np.all(np.diff(state.objective_trace) <= 0)

    def test_amplitudes_feasible_every_iteration(self):
        stack = small_stack(input_shape=(2, 2), inner_shape=(3, 3), output_shape=(2, 2), ac_layers=2, seed=1)
        amin, amax = stack.alpha_bounds
        seen = []

        def watch(iteration, objective, amplitudes):
            seen.append({k: v.copy() for k, v in amplitudes.items()})

        ss.run_pgd(stack, ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 2),
                   ss.PgdConfig(max_iterations=40, seed=3), monitor=watch)
        assert seen
        for snapshot in seen:
            for layer, amp in snapshot.items():
                if stack.kind_of(layer).amplitude_tunable:
                    assert np.all(amp >= amin - 1e-15) and np.all(amp <= amax + 1e-15)
                elif stack.kind_of(layer) is not ss.LayerKind.ST_DAL:
                    np.testing.assert_allclose(amp, stack.alpha_pc, rtol=0, atol=1e-15)

    def test_coefficients_written_back_to_stack(self):
        stack = small_stack(seed=9)
        target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 9)
        state = ss.run_pgd(stack, target, ss.PgdConfig(max_iterations=30, seed=4))
        assert ss.objective(stack, target) == pytest.approx(state.final_objective, rel=1e-12)
        for layer in stack.space_layers:
            coeff = stack.coefficients_of(layer)
            if coeff.kind.phase_tunable:
                np.testing.assert_array_equal(coeff.phases, state.phases[layer])
            else:
                np.testing.assert_array_equal(coeff.amplitudes, state.amplitudes[layer])

    def test_all_layers_frozen_is_not_fatal(self):
        stack = small_stack(seed=12)
        target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 12)
        config = ss.PgdConfig(max_iterations=10, initial_step=1e12, max_backtracks=0, step_growth=1.0, seed=5)
        state = ss.run_pgd(stack, target, config)
        assert state.frozen_events >= len(stack.kinds)
        assert np.all(np.diff(state.objective_trace) <= 0)

    def test_deterministic_given_seed(self):
        results = []
        for _ in range(2):
            stack = small_stack(seed=2)
            target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 6)
            results.append(ss.run_pgd(stack, target, ss.PgdConfig(max_iterations=25, seed=8)).objective_trace)
        np.testing.assert_array_equal(results[0], results[1])


class TestTraceFile:
    def test_trace_csv_layout(self, tmp_path):
        stack = small_stack(seed=3)
        target = ss.generate_target(stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius, 3)
        state = ss.run_pgd(stack, target, ss.PgdConfig(max_iterations=12, seed=1))
        path = tmp_path / "trace.csv"
        ss.write_trace_csv(state, path)
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["iteration", "objective_linear", "objective_db"]
        assert len(header) == 3 + len(stack.kinds)
        assert len(lines) == 1 + len(state.objective_trace)
        values = [float(line.split(",")[1]) for line in lines[1:]]
        np.testing.assert_allclose(values, state.objective_trace, rtol=1e-15)
