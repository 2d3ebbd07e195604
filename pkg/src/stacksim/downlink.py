"""Multiuser downlink evaluation around the randomized stack.

Users are dropped uniformly (by area) on an annulus below the base station,
with distance-law path loss and i.i.d. Rayleigh block fading normalized to
unit mean channel energy. Each slot, every user measures its per-beam SINRs,
reports only its best beam's SINR, and the scheduler assigns each beam to the
strongest reporter. A full-feedback baseline serves the strongest channels
with channel-inversion precoding under the same total power.

Noise enters every SINR as the single scalar ratio of noise power to
per-stream symbol energy, derived from the scenario's power and noise
settings (see :meth:`DownlinkScenario.noise_over_energy`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError
from .propagation import SPEED_OF_LIGHT

__all__ = [
    "UNSERVED",
    "DownlinkScenario",
    "UserChannel",
    "SlotScheduleResult",
    "FairnessVariant",
    "OverheadCounts",
    "drop_users",
    "effective_channels",
    "user_sinr",
    "sinr_matrix",
    "schedule_slot",
    "ta_sum_rate",
    "per_user_rate_matrix",
    "fairness_index",
    "overhead",
    "baseline_mimo",
]

UNSERVED = -1


@dataclass(frozen=True)
class DownlinkScenario:
    """Cell geometry, link budget, and schedule shape of one simulation.

    The path-loss exponent defaults to 3.2 (3GPP UMi NLOS at 28 GHz); the
    opportunistic scheme's gain over the full-feedback baseline hinges on how
    strongly distance separates users, so this default is the calibration
    knob to revisit first (``--eta`` on the CLI).
    """

    user_count: int
    bs_height_m: float = 10.0
    inner_radius_m: float = 10.0
    outer_radius_m: float = 50.0
    carrier_hz: float = 28e9
    bandwidth_hz: float = 10e6
    tx_power_dbm: float = 15.0
    noise_psd_dbm_hz: float = -174.0
    pathloss_exponent: float = 3.2
    reference_distance_m: float = 1.0
    slot_count: int = 2
    streams: int = 4

    def validate(self) -> list[str]:
        problems = []
        if self.user_count < 1:
            problems.append("user_count must be at least 1")
        if not 0 < self.inner_radius_m < self.outer_radius_m:
            problems.append("need 0 < inner_radius_m < outer_radius_m")
        if self.slot_count < 1:
            problems.append("slot_count must be at least 1")
        if self.streams < 1:
            problems.append("streams must be at least 1")
        for name in ("bs_height_m", "carrier_hz", "bandwidth_hz", "pathloss_exponent", "reference_distance_m"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        return problems

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_over_energy(self) -> float:
        """Noise power over per-stream symbol energy rate, as one linear scalar.

        Noise power is the PSD integrated over the bandwidth; symbol energy
        per unit time equals the radiated power at Nyquist signaling, so the
        ratio reduces to (noise power) / (transmit power).
        """
        noise_dbm = self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)
        return 10.0 ** ((noise_dbm - self.tx_power_dbm) / 10.0)


@dataclass(frozen=True)
class UserChannel:
    """One user's placement and small-scale fading (unit mean energy)."""

    position: np.ndarray  # (3,) meters
    distance: float
    pathloss: float
    fading: np.ndarray  # (output_size,) complex


@dataclass(frozen=True)
class SlotScheduleResult:
    """Per-beam outcome of one slot: winning user (or UNSERVED), SINR, rate."""

    slot: int
    beam_users: np.ndarray  # (streams,) int
    beam_sinrs: np.ndarray  # (streams,) float, 0 where unserved
    beam_rates: np.ndarray  # (streams,) float, 0 where unserved

    @property
    def served_sum_rate(self) -> float:
        return float(np.sum(self.beam_rates))


class FairnessVariant(str, Enum):
    PER_SLOT = "per-slot"
    COHERENCE_WINDOW = "coherence"


@dataclass(frozen=True)
class OverheadCounts:
    """Training and feedback symbol counts per coherence interval."""

    train_partial: int
    train_full: int
    feedback_partial: float
    feedback_full: int
    within_training_budget: bool


def pathloss(distance: float, wavelength: float, reference_distance: float, exponent: float) -> float:
    """Distance power law anchored at the far-field reference distance."""
    return (wavelength / (4.0 * math.pi * reference_distance)) ** 2 * (reference_distance / distance) ** exponent


def drop_users(scenario: DownlinkScenario, seed: int, fading_seed: int | None = None, output_size: int | None = None) -> list[UserChannel]:
    """Drop users uniformly by area on the annulus and draw their fading.

    ``output_size`` is the fading vector length, the stack's output layer
    size (defaults to the scenario's stream count). Positions and fading come
    from independent child streams of ``seed`` unless a dedicated
    ``fading_seed`` is supplied.
    """
    dim = output_size if output_size is not None else scenario.streams
    pos_ss, fad_ss = np.random.SeedSequence(seed).spawn(2)
    pos_rng = np.random.default_rng(pos_ss)
    fad_rng = np.random.default_rng(fad_ss if fading_seed is None else fading_seed)

    count = scenario.user_count
    r_in2 = scenario.inner_radius_m**2
    r_out2 = scenario.outer_radius_m**2
    radius = np.sqrt(r_in2 + (r_out2 - r_in2) * pos_rng.uniform(size=count))
    angle = pos_rng.uniform(0.0, 2.0 * math.pi, count)
    fading = (fad_rng.standard_normal((count, dim)) + 1j * fad_rng.standard_normal((count, dim))) * math.sqrt(
        0.5 / dim
    )

    users = []
    for u in range(count):
        position = np.array([radius[u] * math.cos(angle[u]), radius[u] * math.sin(angle[u]), 0.0])
        distance = math.sqrt(radius[u] ** 2 + scenario.bs_height_m**2)
        users.append(
            UserChannel(
                position=position,
                distance=distance,
                pathloss=pathloss(
                    distance, scenario.wavelength, scenario.reference_distance_m, scenario.pathloss_exponent
                ),
                fading=fading[u],
            )
        )
    return users


def effective_channels(users: list[UserChannel], response: np.ndarray) -> np.ndarray:
    """Per-(user, beam) scalar channels: sqrt(pathloss) * fading^H * steering column."""
    response = np.asarray(response)
    dim = response.shape[0]
    for user in users:
        if user.fading.shape != (dim,):
            raise ConfigurationError(
                f"user fading length {user.fading.shape} does not match response rows {dim}"
            )
    fad = np.asarray([u.fading for u in users])
    gains = np.sqrt(np.asarray([u.pathloss for u in users]))
    return gains[:, None] * (fad.conj() @ response)


def user_sinr(c_row: np.ndarray, n: int, noise_over_energy: float) -> float:
    """SINR of beam ``n`` at one user, the other beams acting as interference."""
    if not noise_over_energy > 0:
        raise ValueError("noise_over_energy must be positive")
    power = np.abs(np.asarray(c_row)) ** 2
    return float(power[n] / (power.sum() - power[n] + noise_over_energy))


def sinr_matrix(effective: np.ndarray, noise_over_energy: float) -> np.ndarray:
    """All per-(user, beam) SINRs at once."""
    power = np.abs(effective) ** 2
    total = power.sum(axis=1, keepdims=True)
    return power / (total - power + noise_over_energy)


def schedule_slot(effective: np.ndarray, noise_over_energy: float, slot: int = 0) -> SlotScheduleResult:
    """Opportunistic assignment from best-beam feedback.

    Every user reports the index of its highest-SINR beam (ties toward the
    smaller beam) together with that SINR; each beam then goes to its
    strongest reporter (ties toward the smaller user index). Beams nobody
    reported stay unserved at zero rate.
    """
    effective = np.atleast_2d(np.asarray(effective))
    user_count, streams = effective.shape
    sinr = sinr_matrix(effective, noise_over_energy)
    best_beam = np.argmax(sinr, axis=1)
    reported = sinr[np.arange(user_count), best_beam]

    beam_users = np.full(streams, UNSERVED)
    beam_sinrs = np.zeros(streams)
    beam_rates = np.zeros(streams)
    for n in range(streams):
        reporters = np.flatnonzero(best_beam == n)
        if reporters.size == 0:
            continue
        winner = reporters[np.argmax(reported[reporters])]
        beam_users[n] = winner
        beam_sinrs[n] = reported[winner]
        beam_rates[n] = math.log2(1.0 + reported[winner])
    return SlotScheduleResult(slot=slot, beam_users=beam_users, beam_sinrs=beam_sinrs, beam_rates=beam_rates)


def ta_sum_rate(results: list[SlotScheduleResult]) -> float:
    """Served rates summed per slot, averaged over the coherence interval."""
    if not results:
        raise ValueError("need at least one slot result")
    return float(np.mean([r.served_sum_rate for r in results]))


def per_user_rate_matrix(results: list[SlotScheduleResult], user_count: int) -> np.ndarray:
    """(user_count, slots) rate matrix; users not served in a slot get 0."""
    rates = np.zeros((user_count, len(results)))
    for m, result in enumerate(results):
        for n, user in enumerate(result.beam_users):
            if user != UNSERVED:
                rates[user, m] += result.beam_rates[n]
    return rates


def _jain(values: np.ndarray) -> float:
    square_sum = float(np.sum(values**2))
    if square_sum == 0.0:
        return 0.0
    return float(np.sum(values)) ** 2 / square_sum


def fairness_index(
    per_user_rates: np.ndarray,
    variant: FairnessVariant = FairnessVariant.COHERENCE_WINDOW,
    normalized: bool = False,
) -> float:
    """Unnormalized Jain index of the served rates.

    PER_SLOT evaluates the index slot by slot and averages (a slot with no
    service contributes 0); COHERENCE_WINDOW evaluates it once on the
    per-user rates averaged over the interval, which is the variant that
    exposes how many distinct users the interval served. ``normalized``
    divides by the user count, mapping onto [0, 1].
    """
    rates = np.atleast_2d(np.asarray(per_user_rates, dtype=float))
    if np.any(rates < 0):
        raise ValueError("rates must be non-negative")
    variant = FairnessVariant(variant)
    if variant is FairnessVariant.PER_SLOT:
        value = float(np.mean([_jain(rates[:, m]) for m in range(rates.shape[1])]))
    else:
        value = _jain(rates.mean(axis=1))
    return value / rates.shape[0] if normalized else value


def overhead(streams: int, slots: int, users: int, output_size: int, eta_feedback: float = 1.0) -> OverheadCounts:
    """Training/feedback symbol counts per coherence interval, for the
    best-beam-feedback scheme versus full channel acquisition."""
    if min(streams, slots, users, output_size) < 1 or not eta_feedback > 0:
        raise ValueError("all counts must be >= 1 and eta_feedback > 0")
    return OverheadCounts(
        train_partial=streams * slots,
        train_full=output_size,
        feedback_partial=eta_feedback * users * slots,
        feedback_full=users * output_size,
        within_training_budget=slots <= output_size / streams,
    )


def baseline_mimo(
    users: list[UserChannel],
    streams: int,
    noise_over_energy: float,
    slots: int,
    total_precoder_power: float = 1.0,
) -> list[SlotScheduleResult]:
    """Full-feedback baseline: serve the ``streams`` strongest channels.

    Selects the users with the largest fading energy (ties toward the smaller
    index), precodes each with its channel divided by the channel's squared
    norm, and rescales the precoder set by one common factor so the total
    transmit power matches ``total_precoder_power`` (the randomized scheme's
    radiated-power ratio, for a like-for-like power budget). Channels are
    block-constant, so the same assignment repeats in every slot.
    """
    if len(users) < streams:
        raise ConfigurationError(f"need at least {streams} users, got {len(users)}")
    if not total_precoder_power > 0:
        raise ValueError("total_precoder_power must be positive")
    energies = np.asarray([float(np.sum(np.abs(u.fading) ** 2)) for u in users])
    selected = np.argsort(-energies, kind="stable")[:streams]

    precoders = np.column_stack([users[u].fading / energies[u] for u in selected])
    scale = math.sqrt(total_precoder_power / float(np.sum(np.abs(precoders) ** 2)))
    precoders = scale * precoders

    effective = effective_channels([users[u] for u in selected], precoders)
    power = np.abs(effective) ** 2
    total = power.sum(axis=1)
    beam_sinrs = np.array([power[i, i] / (total[i] - power[i, i] + noise_over_energy) for i in range(streams)])
    beam_rates = np.log2(1.0 + beam_sinrs)
    return [
        SlotScheduleResult(slot=m, beam_users=selected.copy(), beam_sinrs=beam_sinrs.copy(), beam_rates=beam_rates.copy())
        for m in range(slots)
    ]
