"""Shared oracles and builders for the test suite.

The oracles here are deliberately independent of the library's computation
paths: brute-force loops, finite differences, and exhaustive search. Tests
compare the library against them rather than against frozen outputs of the
code under test.
"""

from __future__ import annotations

import numpy as np

import stacksim as ss


def small_stack(
    input_shape=(2, 1),
    inner_shape=(2, 2),
    output_shape=(2, 1),
    ac_layers=1,
    pc_layers=2,
    seed=None,
    alpha_pc=0.9,
    upa_shape=(1, 1),
    slot_count=2,
) -> ss.SimStack:
    """Build a small stack and randomize its tunable coefficients."""
    stack = ss.build_stack(
        ss.StackDescription(
            input_shape=input_shape,
            inner_shape=inner_shape,
            output_shape=output_shape,
            ac_layers=ac_layers,
            pc_layers=pc_layers,
            upa_shape=upa_shape,
            alpha_pc=alpha_pc,
            slot_count=slot_count,
        )
    )
    if seed is not None:
        randomize_stack(stack, seed)
    return stack


def randomize_stack(stack: ss.SimStack, seed: int) -> None:
    rng = np.random.default_rng(seed)
    amin, amax = stack.alpha_bounds
    for layer in stack.space_layers:
        coeff = stack.coefficients_of(layer)
        size = coeff.amplitudes.shape[0]
        if coeff.kind.phase_tunable:
            stack.set_layer(layer, phases=rng.uniform(0, 2 * np.pi, size))
        else:
            stack.set_layer(layer, amplitudes=rng.uniform(amin, min(amax, 2.0), size))


def compose_by_path_sum(stack: ss.SimStack) -> np.ndarray:
    """Space-block response accumulated path by path with explicit loops."""
    mats = stack.tail_matrices()
    gammas = stack.gammas()
    n_layers = len(mats)
    out = np.zeros((stack.output_size, stack.input_size), dtype=complex)
    sizes = [m.shape[0] for m in mats]

    def walk(layer, row, amplitude):
        if layer == n_layers:
            return {row: amplitude}
        total = {}
        for nxt in range(sizes[layer]):
            contribution = amplitude * mats[layer][nxt, row] * gammas[layer][nxt]
            for end, value in walk(layer + 1, nxt, contribution).items():
                total[end] = total.get(end, 0.0) + value
        return total

    for z in range(stack.input_size):
        for first in range(sizes[0]):
            seed_amp = mats[0][first, z] * gammas[0][first]
            for end, value in walk(1, first, seed_amp).items():
                out[end, z] += value
    return out


def objective_by_entry_sum(stack: ss.SimStack, target: ss.TargetMatrix) -> float:
    g0 = ss.compose_space_block(stack)
    total = 0.0
    for v in range(g0.shape[0]):
        for z in range(g0.shape[1]):
            total += abs(g0[v, z] - target.entries[v, z]) ** 2
    return total


def finite_difference_gradient(stack: ss.SimStack, target: ss.TargetMatrix, layer: int, step=1e-6) -> np.ndarray:
    """Central finite differences of the objective in the layer's tunable quantity."""
    coeff = stack.coefficients_of(layer)
    phase_layer = coeff.kind.phase_tunable
    base = (coeff.phases if phase_layer else coeff.amplitudes).copy()
    grad = np.zeros_like(base)
    for i in range(base.size):
        for sign in (+1, -1):
            bumped = base.copy()
            bumped[i] += sign * step
            if phase_layer:
                stack.set_layer(layer, phases=bumped)
            else:
                stack.set_layer(layer, amplitudes=bumped)
            grad[i] += sign * ss.objective(stack, target)
    if phase_layer:
        stack.set_layer(layer, phases=base)
    else:
        stack.set_layer(layer, amplitudes=base)
    return grad / (2 * step)


def exhaustive_schedule(effective: np.ndarray, noise: float):
    """Reference scheduler: recompute every user's argmax and each beam's
    winner by explicit loops."""
    users, streams = effective.shape
    sinr = np.zeros((users, streams))
    for u in range(users):
        for n in range(streams):
            interference = sum(abs(effective[u, j]) ** 2 for j in range(streams) if j != n)
            sinr[u, n] = abs(effective[u, n]) ** 2 / (interference + noise)
    best = []
    for u in range(users):
        n_star, val = 0, sinr[u, 0]
        for n in range(1, streams):
            if sinr[u, n] > val:
                n_star, val = n, sinr[u, n]
        best.append((n_star, val))
    assignment = []
    for n in range(streams):
        winner, winner_val = ss.UNSERVED, -1.0
        for u in range(users):
            if best[u][0] == n and best[u][1] > winner_val:
                winner, winner_val = u, best[u][1]
        assignment.append((winner, winner_val if winner != ss.UNSERVED else 0.0))
    return assignment
