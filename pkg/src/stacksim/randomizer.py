"""Per-slot random phase codes for the time-modulated input layer, and the
named seed substreams used everywhere randomness is needed.

One master seed per Monte Carlo trial is split into independent named
substreams (target, pgd-init, st-phases, channels, user-drops, ...) so that
enabling or disabling one source of randomness never perturbs the others.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["SlotPhases", "draw_slot_phases", "stream_seed", "stream_rng"]

TWO_PI = 2.0 * np.pi


def stream_seed(master_seed: int, *parts) -> int:
    """Derive a stable 64-bit seed from a master seed and named stream parts.

    Parts may be strings or integers; the derivation is a SHA-256 hash, so it
    is stable across processes, platforms, and execution order.
    """
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for part in parts:
        tag = b"s:" + part.encode() if isinstance(part, str) else b"i:" + str(int(part)).encode()
        h.update(b"\x00" + tag)
    return int.from_bytes(h.digest()[:8], "little")


def stream_rng(master_seed: int, *parts) -> np.random.Generator:
    """Generator seeded by :func:`stream_seed`."""
    return np.random.default_rng(stream_seed(master_seed, *parts))


@dataclass(frozen=True)
class SlotPhases:
    """Random phases of the time-coded layer: one row of ``element_count``
    phases in [0, 2*pi) per time slot."""

    phases: np.ndarray  # (slot_count, element_count)
    beta: float
    seed: int

    @property
    def slot_count(self) -> int:
        return self.phases.shape[0]

    @property
    def element_count(self) -> int:
        return self.phases.shape[1]

    def coefficients(self, slot: int, beta: float | None = None) -> np.ndarray:
        """Complex transmission coefficients ``beta * exp(j*psi)`` for one slot."""
        if not 0 <= slot < self.slot_count:
            raise IndexError(f"slot {slot} outside 0..{self.slot_count - 1}")
        b = self.beta if beta is None else beta
        return b * np.exp(1j * self.phases[slot])


def draw_slot_phases(slot_count: int, element_count: int, seed: int, beta: float = 1.0) -> SlotPhases:
    """Draw i.i.d. uniform [0, 2*pi) phases for every (slot, element) pair.

    Slots are generated from independent child streams of ``seed`` so the
    draw for slot m does not depend on how many later slots are requested.
    """
    if slot_count < 1 or element_count < 1:
        raise ValueError("slot_count and element_count must be at least 1")
    children = np.random.SeedSequence(seed).spawn(slot_count)
    rows = [np.random.default_rng(child).uniform(0.0, TWO_PI, element_count) for child in children]
    phases = np.asarray(rows)
    phases.flags.writeable = False
    return SlotPhases(phases=phases, beta=beta, seed=seed)
