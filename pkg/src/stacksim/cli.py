"""Command-line entry points for the synthesis and downlink experiments."""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import harness
from .errors import ConfigurationError, ValidationError
from .pgd import PgdConfig, constraint_deviation, run_pgd, write_trace_csv
from .randomizer import stream_seed
from .stack import StackDescription, build_stack
from .target import generate_target

_HEADLINE = {
    "synth_sweep_layers": "objective_db",
    "synth_convergence": "objective_db",
    "sumrate_vs_users": "ta_sum_rate",
    "fairness_vs_users": "fairness_coherence",
    "custom": "objective_db",
}


@click.group()
def main() -> None:
    """Randomized space-time coded metasurface stack simulator."""


def _preset_options(downlink: bool):
    def wrap(f):
        f = click.option("--seed", type=int, default=None, help="Master seed [default: 0].")(f)
        f = click.option("--trials", type=int, default=None, help="Trials per sweep point.")(f)
        f = click.option("--out", type=click.Path(), default=None, help="Output directory.")(f)
        f = click.option("--scale", type=float, default=1.0, show_default=True, help="Desk-scale shrink factor.")(f)
        if downlink:
            f = click.option("--eta", type=float, default=None, help="Path-loss exponent override.")(f)
            f = click.option("--d0", type=float, default=None, help="Reference distance override (m).")(f)
            f = click.option(
                "--fairness-variant",
                type=click.Choice(["per-slot", "coherence"]),
                default="coherence",
                show_default=True,
                help="Fairness variant highlighted in the console summary.",
            )(f)
        return f

    return wrap


def _execute(config: harness.ExperimentConfig, out: str | None, fairness_variant: str = "coherence") -> None:
    out_dir = Path(out) if out else Path("results") / config.kind.value
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_dir = out_dir if config.kind is harness.ExperimentKind.SYNTH_CONVERGENCE else None
    try:
        records = harness.run_experiment(config, trace_dir=trace_dir)
    except ValidationError as exc:
        raise click.ClickException(str(exc)) from exc
    harness.write_csv(records, out_dir / "results.csv")
    harness.write_summary_json(records, config, out_dir / "summary.json")

    headline = _HEADLINE[config.kind.value]
    if headline.startswith("fairness"):
        headline = "fairness_per_slot" if fairness_variant == "per-slot" else "fairness_coherence"
    rows = [r for r in harness.summarize(records) if r.get("metric") == headline]
    if rows:
        keys = [k for k, _ in records[0].sweep]
        click.echo(f"{headline} (median over trials):")
        for row in rows:
            label = ", ".join(f"{k}={row[k]}" for k in keys) or "base point"
            click.echo(f"  {label}: {row['median']:.4g}")
    click.echo(f"wrote {out_dir / 'results.csv'} and {out_dir / 'summary.json'}")


@main.command()
@_preset_options(downlink=False)
def fig3(seed, trials, out, scale) -> None:
    """Synthesis error vs number of phase-controlled layers and inner cells."""
    _execute(harness.fig3_config(seed=seed or 0, trials=trials or 5, scale=scale), out)


@main.command()
@_preset_options(downlink=False)
def fig4(seed, trials, out, scale) -> None:
    """Optimizer convergence traces for several inner layer sizes."""
    _execute(harness.fig4_config(seed=seed or 0, trials=trials or 5, scale=scale), out)


@main.command()
@_preset_options(downlink=True)
def fig5(seed, trials, out, scale, eta, d0, fairness_variant) -> None:
    """Time-averaged sum rate vs user count, against the full-feedback baseline."""
    config = harness.fig5_config(seed=seed or 0, trials=trials or 100, scale=scale, eta=eta, d0=d0)
    _execute(config, out, fairness_variant)


@main.command()
@_preset_options(downlink=True)
def fig6(seed, trials, out, scale, eta, d0, fairness_variant) -> None:
    """Fairness vs user count for several slot counts."""
    config = harness.fig6_config(seed=seed or 0, trials=trials or 100, scale=scale, eta=eta, d0=d0)
    _execute(config, out, fairness_variant)


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@_preset_options(downlink=True)
def run(config_file, seed, trials, out, scale, eta, d0, fairness_variant) -> None:
    """Run a custom experiment from a JSON config file."""
    try:
        config = harness.config_from_dict(json.loads(Path(config_file).read_text()))
    except (ConfigurationError, json.JSONDecodeError) as exc:
        raise click.ClickException(str(exc)) from exc
    if seed is not None:
        config = dataclasses.replace(config, master_seed=seed)
    if trials is not None:
        config = dataclasses.replace(config, trial_count=trials)
    if eta is not None:
        config = dataclasses.replace(config, scenario=dataclasses.replace(config.scenario, pathloss_exponent=eta))
    if d0 is not None:
        config = dataclasses.replace(config, scenario=dataclasses.replace(config.scenario, reference_distance_m=d0))
    config = harness.apply_scale(config, scale)
    _execute(config, out or config.output_path, fairness_variant)


@main.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Overrides the config's seed.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
def synth(config_file, seed, out) -> None:
    """One synthesis run from a config file holding at least a "stack" object.

    Writes the per-iteration trace CSV and a JSON summary of the outcome.
    """
    try:
        data = json.loads(Path(config_file).read_text())
        if "kind" in data:
            config = harness.config_from_dict(data)
            stack_desc, pgd_overrides = config.stack, dict(config.pgd)
            master = config.master_seed
        else:
            unknown = sorted(set(data) - {"stack", "pgd", "master_seed"})
            if unknown:
                raise ConfigurationError(f"unknown synth config fields: {', '.join(unknown)}")
            stack_desc = StackDescription.from_dict(data["stack"])
            pgd_overrides = dict(data.get("pgd", {}))
            master = int(data.get("master_seed", 0))
    except (ConfigurationError, json.JSONDecodeError, KeyError) as exc:
        raise click.ClickException(str(exc)) from exc
    if seed is not None:
        master = seed

    out_dir = Path(out) if out else Path("results") / "synth"
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        stack = build_stack(stack_desc)
        key = harness._synth_key(stack_desc)
        target = generate_target(
            stack.input_size, stack.output_size, stack.beta, stack.w1_frobenius,
            stream_seed(master, "target", 0, key),
        )
        pgd_config = PgdConfig(**{**pgd_overrides, "seed": stream_seed(master, "pgd-init", 0, key)})
        state = run_pgd(stack, target, pgd_config)
    except (ConfigurationError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc

    write_trace_csv(state, out_dir / "pgd_trace.csv")
    summary = {
        "stack": stack_desc.to_dict(),
        "pgd": pgd_overrides,
        "master_seed": master,
        "final_objective": state.final_objective,
        "final_objective_db": state.final_objective_db,
        "iterations": state.iteration,
        "converged": state.converged,
        "power_constraint_deviation": constraint_deviation(stack),
    }
    (out_dir / "synth_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(
        f"final objective {state.final_objective_db:.2f} dB after {state.iteration} iterations; "
        f"wrote {out_dir / 'pgd_trace.csv'}"
    )


if __name__ == "__main__":
    sys.exit(main())
