"""Configuration-driven Monte Carlo experiments and result records.

An experiment sweeps stack and scenario parameters over a grid of points,
runs ``trial_count`` independent trials per point, and emits one record per
(point, trial, metric). Everything is deterministic given the master seed:
every random draw comes from a named substream keyed by content (trial
index, stream name, and the parameters that draw depends on), never by
execution order. Consequences worth knowing:

* sweep points that share a stack configuration (e.g. a user-count sweep)
  reuse one synthesis per trial instead of re-running the optimizer;
* user drops are drawn once per trial at the largest swept user count and
  prefix-sliced for smaller counts (common random numbers across the sweep);
* the baseline and the randomized scheme see identical users and fading
  within a trial (paired-sample comparison).
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .downlink import (
    DownlinkScenario,
    FairnessVariant,
    UserChannel,
    baseline_mimo,
    drop_users,
    effective_channels,
    fairness_index,
    overhead,
    per_user_rate_matrix,
    schedule_slot,
    ta_sum_rate,
)
from .errors import ConfigurationError, ValidationError
from .pgd import PgdConfig, PgdState, constraint_deviation, run_pgd, write_trace_csv
from .randomizer import draw_slot_phases, stream_seed
from .stack import SimStack, StackDescription, build_stack, radiated_power_ratio, slot_response
from .target import TargetMatrix, generate_target

__all__ = [
    "ExperimentKind",
    "SweepAxes",
    "ExperimentConfig",
    "ResultRecord",
    "run_experiment",
    "summarize",
    "write_csv",
    "write_summary_json",
    "fig3_config",
    "fig4_config",
    "fig5_config",
    "fig6_config",
    "apply_scale",
    "config_from_dict",
    "config_to_dict",
]

logger = logging.getLogger(__name__)

_DOWNLINK_KINDS = ("sumrate_vs_users", "fairness_vs_users")


class ExperimentKind(str, Enum):
    SYNTH_SWEEP_LAYERS = "synth_sweep_layers"
    SYNTH_CONVERGENCE = "synth_convergence"
    SUMRATE_VS_USERS = "sumrate_vs_users"
    FAIRNESS_VS_USERS = "fairness_vs_users"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SweepAxes:
    """Swept parameter values; ``None`` axes are not swept.

    inner_counts: total cells of the inner layers (must be perfect squares).
    pc_layer_counts: number of phase-controlled layers.
    user_counts: users in the cell.
    slot_counts: time slots per coherence interval.
    """

    inner_counts: tuple[int, ...] | None = None
    pc_layer_counts: tuple[int, ...] | None = None
    user_counts: tuple[int, ...] | None = None
    slot_counts: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                object.__setattr__(self, f.name, tuple(int(v) for v in value))

    def axes(self) -> list[tuple[str, tuple[int, ...]]]:
        names = {
            "inner_counts": "inner_cells",
            "pc_layer_counts": "pc_layers",
            "user_counts": "users",
            "slot_counts": "slots",
        }
        return [(names[f.name], getattr(self, f.name)) for f in fields(self) if getattr(self, f.name) is not None]

    def to_dict(self) -> dict:
        return {f.name: (list(v) if (v := getattr(self, f.name)) is not None else None) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepAxes":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown sweep fields: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ExperimentKind
    stack: StackDescription
    scenario: DownlinkScenario
    sweep: SweepAxes
    trial_count: int = 1
    master_seed: int = 0
    output_path: str | None = None
    eta_feedback: float = 1.0
    pgd: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    sweep: tuple[tuple[str, int], ...]
    metric: str
    value: float
    seed: int
    elapsed_s: float


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "kind": config.kind.value,
        "stack": config.stack.to_dict(),
        "scenario": dataclasses.asdict(config.scenario),
        "sweep": config.sweep.to_dict(),
        "trial_count": config.trial_count,
        "master_seed": config.master_seed,
        "output_path": config.output_path,
        "eta_feedback": config.eta_feedback,
        "pgd": dict(config.pgd),
    }


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown config fields: {', '.join(unknown)}")
    missing = sorted({"kind", "stack", "scenario", "sweep"} - set(data))
    if missing:
        raise ConfigurationError(f"missing config fields: {', '.join(missing)}")
    scenario_fields = {f.name for f in fields(DownlinkScenario)}
    unknown_scenario = sorted(set(data["scenario"]) - scenario_fields)
    if unknown_scenario:
        raise ConfigurationError(f"unknown scenario fields: {', '.join(unknown_scenario)}")
    pgd_fields = {f.name for f in fields(PgdConfig)}
    unknown_pgd = sorted(set(data.get("pgd", {})) - pgd_fields)
    if unknown_pgd:
        raise ConfigurationError(f"unknown pgd fields: {', '.join(unknown_pgd)}")
    return ExperimentConfig(
        kind=ExperimentKind(data["kind"]),
        stack=StackDescription.from_dict(data["stack"]),
        scenario=DownlinkScenario(**data["scenario"]),
        sweep=SweepAxes.from_dict(data["sweep"]),
        trial_count=int(data.get("trial_count", 1)),
        master_seed=int(data.get("master_seed", 0)),
        output_path=data.get("output_path"),
        eta_feedback=float(data.get("eta_feedback", 1.0)),
        pgd=dict(data.get("pgd", {})),
    )


# -- sweep-point expansion -----------------------------------------------------


def sweep_points(config: ExperimentConfig) -> list[dict]:
    axes = config.sweep.axes()
    if not axes:
        return [{}]
    names = [name for name, _ in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(values for _, values in axes))]


def _square_side(cells: int) -> int:
    side = math.isqrt(cells)
    if side * side != cells:
        raise ConfigurationError(f"swept layer sizes must be perfect squares, got {cells}")
    return side


def stack_for_point(base: StackDescription, point: dict) -> StackDescription:
    desc = base
    if "inner_cells" in point:
        side = _square_side(point["inner_cells"])
        desc = dataclasses.replace(desc, inner_shape=(side, side))
    if "pc_layers" in point:
        desc = dataclasses.replace(desc, pc_layers=int(point["pc_layers"]))
    if "slots" in point:
        desc = dataclasses.replace(desc, slot_count=int(point["slots"]))
    return desc


def scenario_for_point(base: DownlinkScenario, point: dict) -> DownlinkScenario:
    scenario = base
    if "users" in point:
        scenario = dataclasses.replace(scenario, user_count=int(point["users"]))
    if "slots" in point:
        scenario = dataclasses.replace(scenario, slot_count=int(point["slots"]))
    return scenario


def _needs_downlink(kind: ExperimentKind) -> bool:
    return kind.value in _DOWNLINK_KINDS or kind is ExperimentKind.CUSTOM


def validate_config(config: ExperimentConfig) -> list[str]:
    problems = []
    if config.trial_count < 1:
        problems.append("trial_count must be at least 1")
    if not config.eta_feedback > 0:
        problems.append("eta_feedback must be positive")
    for name, values in config.sweep.axes():
        if len(values) == 0:
            problems.append(f"swept axis {name} must be non-empty")
    try:
        points = sweep_points(config)
    except ConfigurationError as exc:
        problems.append(str(exc))
        points = []
    for point in points:
        try:
            desc = stack_for_point(config.stack, point)
        except ConfigurationError as exc:
            problems.append(f"{point}: {exc}")
            continue
        for issue in desc.validate():
            problems.append(f"{point}: {issue}" if point else issue)
    if _needs_downlink(config.kind):
        for issue in config.scenario.validate():
            problems.append(f"scenario: {issue}")
        n_stack = config.stack.upa_shape[0] * config.stack.upa_shape[1]
        if config.scenario.streams != n_stack:
            problems.append(
                f"scenario streams ({config.scenario.streams}) must match the stack's antenna count ({n_stack})"
            )
        if config.scenario.carrier_hz != config.stack.frequency_hz:
            problems.append("scenario carrier_hz must match the stack's frequency_hz")
    try:
        PgdConfig(**config.pgd)
    except (TypeError, ValueError) as exc:
        problems.append(f"pgd: {exc}")
    return problems


def _warn_training_budget(config: ExperimentConfig) -> None:
    if not _needs_downlink(config.kind):
        return
    v = config.stack.output_shape[0] * config.stack.output_shape[1]
    n = config.scenario.streams
    slot_values = config.sweep.slot_counts or (config.scenario.slot_count,)
    for m in slot_values:
        if m > v / n:
            warnings.warn(
                f"slot count {m} exceeds the training-overhead budget ({v}/{n}); "
                "partial-feedback training is no longer cheaper than full acquisition",
                stacklevel=3,
            )


# -- the runner ------------------------------------------------------------------


@dataclass
class _SynthOutcome:
    state: PgdState
    target: TargetMatrix
    objective_db: float
    iterations: int


def _synth_key(desc: StackDescription) -> str:
    """Stack identity for seed derivation; slot count does not affect synthesis."""
    return dataclasses.replace(desc, slot_count=1).to_json()


def _apply_state(stack: SimStack, state: PgdState) -> None:
    for layer in stack.space_layers:
        if stack.kind_of(layer).phase_tunable:
            stack.set_layer(layer, phases=state.phases[layer])
        else:
            stack.set_layer(layer, amplitudes=state.amplitudes[layer])


def run_experiment(config: ExperimentConfig, trace_dir: str | Path | None = None) -> list[ResultRecord]:
    """Run every (sweep point, trial), returning one record per metric.

    A numeric failure inside one trial is recorded as a ``trial_failed``
    metric for that (point, trial) and the run continues. For convergence
    experiments, per-iteration optimizer traces are written to ``trace_dir``
    when given.
    """
    problems = validate_config(config)
    if problems:
        raise ValidationError("invalid experiment config:\n- " + "\n- ".join(problems))
    _warn_training_budget(config)

    experiment = config.kind.value
    downlink = _needs_downlink(config.kind)
    points = sweep_points(config)
    user_axis = config.sweep.user_counts
    max_users = max(user_axis) if user_axis else config.scenario.user_count

    synth_cache: dict[tuple[str, int], _SynthOutcome] = {}
    users_cache: dict[int, list[UserChannel]] = {}
    records: list[ResultRecord] = []

    for point in points:
        desc = stack_for_point(config.stack, point)
        scenario = scenario_for_point(config.scenario, point)
        stack = build_stack(desc)
        synth_key = _synth_key(desc)
        sweep_items = tuple(point.items())

        for trial in range(config.trial_count):
            trial_seed = stream_seed(config.master_seed, "trial", trial)
            started = time.perf_counter()
            metrics: dict[str, float] = {}
            try:
                cache_key = (synth_key, trial)
                if cache_key not in synth_cache:
                    target = generate_target(
                        stack.input_size,
                        stack.output_size,
                        stack.beta,
                        stack.w1_frobenius,
                        stream_seed(config.master_seed, "target", trial, synth_key),
                    )
                    pgd_config = PgdConfig(
                        **{**config.pgd, "seed": stream_seed(config.master_seed, "pgd-init", trial, synth_key)}
                    )
                    state = run_pgd(stack, target, pgd_config)
                    synth_cache[cache_key] = _SynthOutcome(
                        state=state,
                        target=target,
                        objective_db=state.final_objective_db,
                        iterations=state.iteration,
                    )
                    if trace_dir is not None and config.kind is ExperimentKind.SYNTH_CONVERGENCE:
                        tag = "_".join(f"{k}{v}" for k, v in point.items()) or "base"
                        write_trace_csv(state, Path(trace_dir) / f"trace_{tag}_trial{trial}.csv")
                else:
                    _apply_state(stack, synth_cache[cache_key].state)
                outcome = synth_cache[cache_key]
                metrics["objective_db"] = outcome.objective_db
                metrics["pgd_iterations"] = float(outcome.iterations)
                metrics["power_constraint_deviation"] = constraint_deviation(stack)

                if downlink:
                    metrics.update(
                        _downlink_metrics(config, stack, scenario, trial, synth_key, users_cache, max_users)
                    )
            except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
                logger.warning("trial %d at %s failed: %s", trial, point or "base point", exc)
                metrics = {"trial_failed": 1.0}
            elapsed = time.perf_counter() - started
            for metric, value in metrics.items():
                records.append(
                    ResultRecord(
                        experiment=experiment,
                        sweep=sweep_items,
                        metric=metric,
                        value=float(value),
                        seed=trial_seed,
                        elapsed_s=elapsed,
                    )
                )
    return records


def _downlink_metrics(
    config: ExperimentConfig,
    stack: SimStack,
    scenario: DownlinkScenario,
    trial: int,
    synth_key: str,
    users_cache: dict[int, list[UserChannel]],
    max_users: int,
) -> dict[str, float]:
    if trial not in users_cache:
        pool_scenario = dataclasses.replace(scenario, user_count=max_users)
        users_cache[trial] = drop_users(
            pool_scenario,
            stream_seed(config.master_seed, "user-drop", trial),
            fading_seed=stream_seed(config.master_seed, "channels", trial, stack.output_size),
            output_size=stack.output_size,
        )
    users = users_cache[trial][: scenario.user_count]

    slots = scenario.slot_count
    phases = draw_slot_phases(
        slots,
        stack.input_size,
        stream_seed(config.master_seed, "st-phases", trial, slots, synth_key),
        beta=stack.beta,
    )
    stack.set_slot_phases(phases)
    noise = scenario.noise_over_energy
    results = [
        schedule_slot(effective_channels(users, slot_response(stack, m)), noise, slot=m) for m in range(slots)
    ]
    rates = per_user_rate_matrix(results, len(users))
    ratio = radiated_power_ratio(stack)
    base_results = baseline_mimo(users, scenario.streams, noise, slots, total_precoder_power=ratio)
    base_rates = per_user_rate_matrix(base_results, len(users))
    counts = overhead(scenario.streams, slots, len(users), stack.output_size, config.eta_feedback)
    return {
        "ta_sum_rate": ta_sum_rate(results),
        "ta_sum_rate_baseline": ta_sum_rate(base_results),
        "fairness_per_slot": fairness_index(rates, FairnessVariant.PER_SLOT),
        "fairness_coherence": fairness_index(rates, FairnessVariant.COHERENCE_WINDOW),
        "fairness_per_slot_baseline": fairness_index(base_rates, FairnessVariant.PER_SLOT),
        "fairness_coherence_baseline": fairness_index(base_rates, FairnessVariant.COHERENCE_WINDOW),
        "radiated_power_ratio": ratio,
        "overhead_train_partial": float(counts.train_partial),
        "overhead_train_full": float(counts.train_full),
        "overhead_feedback_partial": float(counts.feedback_partial),
        "overhead_feedback_full": float(counts.feedback_full),
        "training_budget_ok": 1.0 if counts.within_training_budget else 0.0,
    }


# -- summaries and output files ----------------------------------------------------


def _nearest_rank(sorted_values: list[float], percentile: float) -> float:
    rank = max(1, math.ceil(percentile / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def summarize(records: list[ResultRecord]) -> list[dict]:
    """Per (sweep point, metric): count, median, mean, and nearest-rank 10th/90th
    percentiles across trials. Sweep points where every trial failed are kept
    as flagged rows with count 0."""
    groups: dict[tuple[tuple, str], list[float]] = {}
    point_has_success: dict[tuple, bool] = {}
    for record in records:
        point_has_success.setdefault(record.sweep, False)
        if record.metric == "trial_failed":
            continue
        groups.setdefault((record.sweep, record.metric), []).append(record.value)
        point_has_success[record.sweep] = True

    rows = []
    for (sweep, metric), values in groups.items():
        ordered = sorted(values)
        rows.append(
            {
                **dict(sweep),
                "metric": metric,
                "count": len(values),
                "median": float(np.median(ordered)),
                "mean": float(np.mean(ordered)),
                "p10": _nearest_rank(ordered, 10.0),
                "p90": _nearest_rank(ordered, 90.0),
            }
        )
    for sweep, ok in point_has_success.items():
        if not ok:
            rows.append({**dict(sweep), "metric": "all", "count": 0, "flagged": True})
    return rows


def write_csv(records: list[ResultRecord], path: str | Path) -> None:
    """Result records as CSV: experiment, sweep columns, metric, value, seed, elapsed_s."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = [k for k, _ in records[0].sweep] if records else []
    lines = [",".join(["experiment", *keys, "metric", "value", "seed", "elapsed_s"])]
    for record in records:
        values = dict(record.sweep)
        row = [record.experiment, *(str(values[k]) for k in keys)]
        row += [record.metric, repr(record.value), str(record.seed), repr(record.elapsed_s)]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_summary_json(records: list[ResultRecord], config: ExperimentConfig, path: str | Path) -> None:
    """Summary table plus the fully resolved config, for provenance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": config_to_dict(config), "summary": summarize(records)}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- presets ------------------------------------------------------------------------


def _synth_scenario(slot_count: int = 1) -> DownlinkScenario:
    return DownlinkScenario(user_count=1, slot_count=slot_count, streams=4)


def fig3_config(seed: int = 0, trials: int = 5, scale: float = 1.0) -> ExperimentConfig:
    """Final synthesis error versus phase-controlled layer count, for several
    inner layer sizes."""
    stack = StackDescription(
        input_shape=(3, 3),
        inner_shape=(8, 8),
        output_shape=(5, 5),
        ac_layers=4,
        pc_layers=8,
        alpha_pc=0.9,
        slot_count=1,
    )
    config = ExperimentConfig(
        kind=ExperimentKind.SYNTH_SWEEP_LAYERS,
        stack=stack,
        scenario=_synth_scenario(),
        sweep=SweepAxes(inner_counts=(25, 36, 49, 64), pc_layer_counts=tuple(range(4, 15))),
        trial_count=trials,
        master_seed=seed,
    )
    return apply_scale(config, scale)


def fig4_config(seed: int = 0, trials: int = 5, scale: float = 1.0) -> ExperimentConfig:
    """Optimizer convergence traces for several inner layer sizes."""
    stack = StackDescription(
        input_shape=(3, 3),
        inner_shape=(8, 8),
        output_shape=(5, 5),
        ac_layers=4,
        pc_layers=8,
        alpha_pc=0.9,
        slot_count=1,
    )
    config = ExperimentConfig(
        kind=ExperimentKind.SYNTH_CONVERGENCE,
        stack=stack,
        scenario=_synth_scenario(),
        sweep=SweepAxes(inner_counts=(25, 36, 49, 64)),
        trial_count=trials,
        master_seed=seed,
    )
    return apply_scale(config, scale)


def _downlink_stack(slot_count: int) -> StackDescription:
    return StackDescription(
        input_shape=(10, 10),
        inner_shape=(24, 24),
        output_shape=(3, 3),
        ac_layers=2,
        pc_layers=6,
        alpha_pc=0.9,
        slot_count=slot_count,
    )


def _downlink_scenario(slot_count: int, eta: float | None, d0: float | None) -> DownlinkScenario:
    scenario = DownlinkScenario(user_count=500, slot_count=slot_count, streams=4)
    if eta is not None:
        scenario = dataclasses.replace(scenario, pathloss_exponent=eta)
    if d0 is not None:
        scenario = dataclasses.replace(scenario, reference_distance_m=d0)
    return scenario


def fig5_config(
    seed: int = 0,
    trials: int = 100,
    scale: float = 1.0,
    eta: float | None = None,
    d0: float | None = None,
) -> ExperimentConfig:
    """Time-averaged sum rate versus user count, against the full-feedback baseline.

    The optimizer is capped at 300 iterations here: the downlink metrics see
    the synthesized beams only through their randomization, and the extra
    fit depth does not move them.
    """
    config = ExperimentConfig(
        kind=ExperimentKind.SUMRATE_VS_USERS,
        stack=_downlink_stack(slot_count=2),
        scenario=_downlink_scenario(slot_count=2, eta=eta, d0=d0),
        sweep=SweepAxes(user_counts=(10, 50, 100, 200, 350, 500)),
        trial_count=trials,
        master_seed=seed,
        pgd={"max_iterations": 300},
    )
    return apply_scale(config, scale)


def fig6_config(
    seed: int = 0,
    trials: int = 100,
    scale: float = 1.0,
    eta: float | None = None,
    d0: float | None = None,
) -> ExperimentConfig:
    """Fairness versus user count for several slot counts."""
    config = ExperimentConfig(
        kind=ExperimentKind.FAIRNESS_VS_USERS,
        stack=_downlink_stack(slot_count=2),
        scenario=_downlink_scenario(slot_count=2, eta=eta, d0=d0),
        sweep=SweepAxes(user_counts=(10, 50, 100, 200, 350, 500), slot_counts=(1, 2, 3)),
        trial_count=trials,
        master_seed=seed,
        pgd={"max_iterations": 300},
    )
    return apply_scale(config, scale)


def _scale_side(side: int, factor: float, minimum: int) -> int:
    return max(minimum, math.ceil(side * math.sqrt(factor)))


def apply_scale(config: ExperimentConfig, factor: float) -> ExperimentConfig:
    """Shrink layer sizes and user counts by ``factor`` for desk-scale runs.

    Grid sides scale with sqrt(factor) (element counts roughly with factor),
    floored so the boundary layers still cover the antenna array and the
    inner layers still cover the boundary layers. Only downward scaling is
    supported.
    """
    if factor == 1.0:
        return config
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got {factor}")
    stack = config.stack
    n_side = max(stack.upa_shape)
    input_shape = tuple(_scale_side(s, factor, n_side) for s in stack.input_shape)
    output_shape = tuple(_scale_side(s, factor, n_side) for s in stack.output_shape)
    boundary_side = max(*input_shape, *output_shape)
    inner_shape = tuple(_scale_side(s, factor, boundary_side) for s in stack.inner_shape)
    stack = dataclasses.replace(stack, input_shape=input_shape, inner_shape=inner_shape, output_shape=output_shape)

    sweep = config.sweep
    if sweep.inner_counts is not None:
        sides = [_scale_side(_square_side(q), factor, boundary_side) for q in sweep.inner_counts]
        scaled = tuple(dict.fromkeys(s * s for s in sides))
        sweep = dataclasses.replace(sweep, inner_counts=scaled)
    if sweep.user_counts is not None:
        users = tuple(dict.fromkeys(max(config.scenario.streams, round(u * factor)) for u in sweep.user_counts))
        sweep = dataclasses.replace(sweep, user_counts=users)
    scenario = dataclasses.replace(
        config.scenario,
        user_count=max(config.scenario.streams, round(config.scenario.user_count * factor)),
    )
    return dataclasses.replace(config, stack=stack, sweep=sweep, scenario=scenario)
