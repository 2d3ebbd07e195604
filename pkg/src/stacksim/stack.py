"""Metasurface stack model: layer kinds and coefficients, composition of the
space-coded block response, per-slot responses, and the radiated-power check.

A stack is the cascade

    feed array -> time-coded input layer -> space-coded layers 2..L

where layer L is the output layer. The input and output layers are no larger
than the inner layers (their remaining cells absorb), which decouples the
stack's ``output_size x input_size`` response from the inner layer size.
Layers are numbered by cascade position: 1 is the time-coded input layer and
2..L are the space-coded layers this module composes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from enum import Enum

import numpy as np

from .errors import ConfigurationError
from .geometry import GridSpec
from .propagation import SPEED_OF_LIGHT, KernelParams, build_propagation_matrix
from .randomizer import TWO_PI, SlotPhases

__all__ = [
    "LayerKind",
    "LayerCoefficients",
    "StackDescription",
    "SimStack",
    "build_stack",
    "compose_space_block",
    "slot_response",
    "response_for_coefficients",
    "radiated_power_ratio",
    "power_ratio",
    "db_to_amplitude",
]


def db_to_amplitude(db: float) -> float:
    """Amplitude-scale conversion, 10**(db/20)."""
    return 10.0 ** (db / 20.0)


class LayerKind(str, Enum):
    ST_DAL = "st_dal"  # time-coded input layer (layer 1)
    PHASE_CONTROLLED = "phase_controlled"
    AMPLITUDE_CONTROLLED = "amplitude_controlled"
    TERMINAL_DAL_PC = "terminal_dal_pc"
    TERMINAL_DAL_AC = "terminal_dal_ac"

    @property
    def phase_tunable(self) -> bool:
        return self in (LayerKind.ST_DAL, LayerKind.PHASE_CONTROLLED, LayerKind.TERMINAL_DAL_PC)

    @property
    def amplitude_tunable(self) -> bool:
        return self in (LayerKind.AMPLITUDE_CONTROLLED, LayerKind.TERMINAL_DAL_AC)


@dataclass(frozen=True)
class LayerCoefficients:
    """Per-cell transmission coefficients of one layer: ``amp * exp(j*phase)``."""

    amplitudes: np.ndarray
    phases: np.ndarray
    kind: LayerKind

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=float)
        pha = np.asarray(self.phases, dtype=float)
        if amp.shape != pha.shape or amp.ndim != 1:
            raise ConfigurationError(
                f"amplitudes and phases must be equal-length vectors, got {amp.shape} and {pha.shape}"
            )
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "phases", pha)

    @property
    def values(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)

    def validate(self, alpha_pc: float, beta: float, alpha_min: float, alpha_max: float) -> None:
        """Check the amplitude invariant of this layer's kind."""
        amp = self.amplitudes
        if self.kind.phase_tunable:
            limit = beta if self.kind is LayerKind.ST_DAL else alpha_pc
            if limit > 1.0 + 1e-12:
                raise ConfigurationError(f"fixed amplitude of a phase-tunable layer must be <= 1, got {limit}")
            if not np.allclose(amp, limit, rtol=0.0, atol=1e-12):
                raise ConfigurationError(f"{self.kind.value} layer amplitudes must all equal {limit}")
        else:
            if np.any(amp < alpha_min - 1e-12) or np.any(amp > alpha_max + 1e-12):
                raise ConfigurationError(
                    f"{self.kind.value} layer amplitudes must lie in [{alpha_min}, {alpha_max}]"
                )


@dataclass(frozen=True)
class StackDescription:
    """Serializable description of a stack; the canonical experiment config fragment.

    Grid shapes are (count_x, count_y). Spacings and separations are given in
    carrier wavelengths; element areas default to the spacing squared (one
    full cell). ``pc_layers`` counts the output layer when
    ``terminal_kind == "pc"`` and ``ac_layers`` counts it when "ac".
    """

    input_shape: tuple[int, int]
    inner_shape: tuple[int, int]
    output_shape: tuple[int, int]
    ac_layers: int
    pc_layers: int
    upa_shape: tuple[int, int] = (2, 2)
    terminal_kind: str = "pc"
    frequency_hz: float = 28e9
    element_spacing_wl: float = 0.5
    layer_separation_wl: float = 0.5
    feed_separation_wl: float = 0.5
    feed_element_area_wl2: float | None = None
    meta_element_area_wl2: float | None = None
    beta: float = 1.0
    alpha_pc: float = 0.9
    alpha_min_db: float = -22.0
    alpha_max_db: float = 13.0
    ac_phase_seed: int | None = None
    centered_alignment: bool = False
    slot_count: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "upa_shape", tuple(int(v) for v in self.upa_shape))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "inner_shape", tuple(int(v) for v in self.inner_shape))
        object.__setattr__(self, "output_shape", tuple(int(v) for v in self.output_shape))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def layer_count(self) -> int:
        """Total cascade depth L (time-coded input layer plus space-coded layers)."""
        return 1 + self.ac_layers + self.pc_layers

    def validate(self) -> list[str]:
        problems = []
        n = self.upa_shape[0] * self.upa_shape[1]
        z = self.input_shape[0] * self.input_shape[1]
        q = self.inner_shape[0] * self.inner_shape[1]
        v = self.output_shape[0] * self.output_shape[1]
        if self.terminal_kind not in ("pc", "ac"):
            problems.append(f"terminal_kind must be 'pc' or 'ac', got {self.terminal_kind!r}")
        if self.ac_layers < 0 or self.pc_layers < 0:
            problems.append("layer counts must be non-negative")
        if self.ac_layers + self.pc_layers < 1:
            problems.append("the stack needs at least one space-coded layer")
        if self.terminal_kind == "pc" and self.pc_layers < 1:
            problems.append("terminal_kind 'pc' requires pc_layers >= 1")
        if self.terminal_kind == "ac" and self.ac_layers < 1:
            problems.append("terminal_kind 'ac' requires ac_layers >= 1")
        if z > q or v > q:
            problems.append(f"boundary layers cannot exceed the inner layer size (Z={z}, V={v}, Q={q})")
        if n > z:
            problems.append(f"the input layer needs at least one cell per antenna (N={n}, Z={z})")
        if n > v:
            problems.append(f"the output layer needs at least one cell per stream (N={n}, V={v})")
        if not 0 < self.beta <= 1.0:
            problems.append(f"beta must be in (0, 1], got {self.beta}")
        if not 0 <= self.alpha_pc <= 1.0:
            problems.append(f"alpha_pc must be in [0, 1], got {self.alpha_pc}")
        if self.alpha_min_db > self.alpha_max_db:
            problems.append("alpha_min_db must not exceed alpha_max_db")
        if self.slot_count < 1:
            problems.append("slot_count must be at least 1")
        for name in ("frequency_hz", "element_spacing_wl", "layer_separation_wl", "feed_separation_wl"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        return problems

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "StackDescription":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown stack fields: {', '.join(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StackDescription":
        return cls.from_dict(json.loads(text))


def _layer_kinds(desc: StackDescription) -> tuple[LayerKind, ...]:
    """Kinds of the space-coded layers 2..L, amplitude-controlled ones first."""
    if desc.terminal_kind == "pc":
        inner = [LayerKind.AMPLITUDE_CONTROLLED] * desc.ac_layers
        inner += [LayerKind.PHASE_CONTROLLED] * (desc.pc_layers - 1)
        terminal = LayerKind.TERMINAL_DAL_PC
    else:
        inner = [LayerKind.AMPLITUDE_CONTROLLED] * (desc.ac_layers - 1)
        inner += [LayerKind.PHASE_CONTROLLED] * desc.pc_layers
        terminal = LayerKind.TERMINAL_DAL_AC
    return tuple(inner) + (terminal,)


class SimStack:
    """A fully built stack: grids, propagation matrices, and layer coefficients.

    The propagation matrices are fixed by the geometry; layer coefficients are
    the mutable state. Composition results are cached and invalidated on any
    coefficient update; composed matrices are handed out read-only.
    """

    def __init__(
        self,
        description: StackDescription,
        upa_grid: GridSpec,
        input_grid: GridSpec,
        inner_grid: GridSpec,
        output_grid: GridSpec,
        feed_matrix: np.ndarray,
        tail_matrices: list[np.ndarray],
        coefficients: list[LayerCoefficients],
    ):
        self.description = description
        self.upa_grid = upa_grid
        self.input_grid = input_grid
        self.inner_grid = inner_grid
        self.output_grid = output_grid
        self.feed_matrix = feed_matrix
        self._tail = tail_matrices
        self._coefficients = coefficients
        self.kinds = tuple(c.kind for c in coefficients)
        self.slot_phases: SlotPhases | None = None
        self._space_block: np.ndarray | None = None

    # -- sizes ---------------------------------------------------------------
    @property
    def stream_count(self) -> int:
        return self.upa_grid.total

    @property
    def input_size(self) -> int:
        return self.input_grid.total

    @property
    def inner_size(self) -> int:
        return self.inner_grid.total

    @property
    def output_size(self) -> int:
        return self.output_grid.total

    @property
    def layer_count(self) -> int:
        return 1 + len(self._coefficients)

    @property
    def slot_count(self) -> int:
        return self.description.slot_count

    @property
    def space_layers(self) -> range:
        """Cascade positions of the space-coded layers (2..L)."""
        return range(2, self.layer_count + 1)

    @property
    def beta(self) -> float:
        return self.description.beta

    @property
    def alpha_pc(self) -> float:
        return self.description.alpha_pc

    @property
    def alpha_bounds(self) -> tuple[float, float]:
        return (db_to_amplitude(self.description.alpha_min_db), db_to_amplitude(self.description.alpha_max_db))

    @property
    def w1_frobenius(self) -> float:
        return float(np.linalg.norm(self.feed_matrix))

    # -- per-layer access (positions 2..L) ------------------------------------
    def _pos(self, layer: int) -> int:
        if not 2 <= layer <= self.layer_count:
            raise IndexError(f"space-coded layer must be in 2..{self.layer_count}, got {layer}")
        return layer - 2

    def kind_of(self, layer: int) -> LayerKind:
        return self.kinds[self._pos(layer)]

    def coefficients_of(self, layer: int) -> LayerCoefficients:
        return self._coefficients[self._pos(layer)]

    def gamma(self, layer: int) -> np.ndarray:
        return self._coefficients[self._pos(layer)].values

    def gammas(self) -> list[np.ndarray]:
        return [c.values for c in self._coefficients]

    def tail_matrices(self) -> list[np.ndarray]:
        """Propagation matrices feeding layers 2..L (read-only)."""
        return list(self._tail)

    def set_layer(self, layer: int, phases: np.ndarray | None = None, amplitudes: np.ndarray | None = None) -> None:
        """Replace the tunable coefficients of one space-coded layer.

        Only phases may be set on phase-controlled layers and only amplitudes
        on amplitude-controlled ones; the other component is hardware-fixed.
        """
        pos = self._pos(layer)
        current = self._coefficients[pos]
        kind = current.kind
        if phases is not None and not kind.phase_tunable:
            raise ConfigurationError(f"layer {layer} is {kind.value}; its phases are fixed")
        if amplitudes is not None and not kind.amplitude_tunable:
            raise ConfigurationError(f"layer {layer} is {kind.value}; its amplitudes are fixed")
        new = replace(
            current,
            phases=np.asarray(phases, dtype=float) if phases is not None else current.phases,
            amplitudes=np.asarray(amplitudes, dtype=float) if amplitudes is not None else current.amplitudes,
        )
        amin, amax = self.alpha_bounds
        new.validate(self.alpha_pc, self.beta, amin, amax)
        if new.amplitudes.shape[0] != current.amplitudes.shape[0]:
            raise ConfigurationError(f"layer {layer} expects {current.amplitudes.shape[0]} coefficients")
        self._coefficients[pos] = new
        self._space_block = None

    def set_slot_phases(self, phases: SlotPhases | np.ndarray) -> None:
        """Install the per-slot phase code of the time-coded input layer."""
        if isinstance(phases, SlotPhases):
            matrix = phases.phases
        else:
            matrix = np.asarray(phases, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != self.input_size:
            raise ConfigurationError(
                f"slot phases must have shape (slots, {self.input_size}), got {matrix.shape}"
            )
        if matrix.shape[0] < self.slot_count:
            raise ConfigurationError(
                f"need phases for {self.slot_count} slots, got {matrix.shape[0]}"
            )
        self.slot_phases = SlotPhases(phases=matrix, beta=self.beta, seed=getattr(phases, "seed", -1))

    def slot_coefficients(self, slot: int) -> np.ndarray:
        if self.slot_phases is None:
            raise ConfigurationError("slot phases have not been set")
        if not 0 <= slot < self.slot_count:
            raise IndexError(f"slot {slot} outside 0..{self.slot_count - 1}")
        return self.beta * np.exp(1j * self.slot_phases.phases[slot])


def build_stack(description: StackDescription) -> SimStack:
    """Construct grids, propagation matrices, and initial coefficients.

    Phase-controlled layers start at phase 0 with amplitude ``alpha_pc``;
    amplitude-controlled layers start at amplitude 1 with their fixed, known
    phases (zero unless ``ac_phase_seed`` is given).
    """
    problems = description.validate()
    if problems:
        raise ConfigurationError("; ".join(problems))
    lam = description.wavelength
    spacing = description.element_spacing_wl * lam
    upa = GridSpec(*description.upa_shape, spacing)
    input_grid = GridSpec(*description.input_shape, spacing)
    inner_grid = GridSpec(*description.inner_shape, spacing)
    output_grid = GridSpec(*description.output_shape, spacing)

    feed_area = (description.feed_element_area_wl2 or description.element_spacing_wl**2) * lam**2
    meta_area = (description.meta_element_area_wl2 or description.element_spacing_wl**2) * lam**2
    feed_params = KernelParams(lam, feed_area, description.feed_separation_wl * lam)
    layer_params = KernelParams(lam, meta_area, description.layer_separation_wl * lam)
    centered = description.centered_alignment

    kinds = _layer_kinds(description)
    grids = [inner_grid] * (len(kinds) - 1) + [output_grid]
    feed_matrix = build_propagation_matrix(upa, input_grid, feed_params, centered)
    tail = []
    prev = input_grid
    for grid in grids:
        tail.append(build_propagation_matrix(prev, grid, layer_params, centered))
        prev = grid

    rng = None
    if description.ac_phase_seed is not None:
        rng = np.random.default_rng(description.ac_phase_seed)
    coefficients = []
    for kind, grid in zip(kinds, grids):
        size = grid.total
        if kind.amplitude_tunable:
            phases = rng.uniform(0.0, TWO_PI, size) if rng is not None else np.zeros(size)
            coefficients.append(LayerCoefficients(np.ones(size), phases, kind))
        else:
            coefficients.append(LayerCoefficients(np.full(size, description.alpha_pc), np.zeros(size), kind))
    return SimStack(description, upa, input_grid, inner_grid, output_grid, feed_matrix, tail, coefficients)


def compose_space_block(stack: SimStack) -> np.ndarray:
    """Response of the space-coded block (layers 2..L), ``output_size x input_size``.

    This is the left-to-right product of alternating coefficient diagonals and
    propagation matrices; cached until a coefficient changes.
    """
    if stack._space_block is None:
        out = None
        for w, coeff in zip(stack._tail, stack._coefficients):
            out = w if out is None else w @ out
            out = coeff.values[:, None] * out
        out.flags.writeable = False
        stack._space_block = out
    return stack._space_block


def response_for_coefficients(stack: SimStack, delta: np.ndarray) -> np.ndarray:
    """End-to-end response ``output_size x stream_count`` for an arbitrary
    input-layer coefficient vector ``delta``."""
    delta = np.asarray(delta)
    if delta.shape != (stack.input_size,):
        raise ConfigurationError(f"delta must have length {stack.input_size}, got {delta.shape}")
    return compose_space_block(stack) @ (delta[:, None] * stack.feed_matrix)


def slot_response(stack: SimStack, slot: int) -> np.ndarray:
    """Per-slot steering matrix: space block times the slot's input-layer code
    times the feed matrix. Constant within a slot."""
    return response_for_coefficients(stack, stack.slot_coefficients(slot))


def power_ratio(space_block: np.ndarray, feed_matrix: np.ndarray, beta: float) -> float:
    """Time-averaged radiated power over per-stream transmit power (dimensionless).

    Equals ``beta^2 * sum_n sum_z |feed[z, n]|^2 * ||space_block[:, z]||^2``;
    exactly 1 when every space-block column has squared norm
    ``1 / (beta^2 * ||feed||_F^2)`` (the no-amplification constraint).
    """
    column_power = np.sum(np.abs(space_block) ** 2, axis=0)
    feed_row_power = np.sum(np.abs(feed_matrix) ** 2, axis=1)
    return float(beta**2 * np.dot(column_power, feed_row_power))


def radiated_power_ratio(stack: SimStack) -> float:
    """:func:`power_ratio` of the stack's composed space block."""
    return power_ratio(compose_space_block(stack), stack.feed_matrix, stack.beta)
