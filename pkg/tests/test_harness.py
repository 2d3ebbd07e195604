import dataclasses
import json

import numpy as np
import pytest

import stacksim as ss
from stacksim import harness


def tiny_downlink_config(trials=2, seed=11):
    """Small custom experiment exercising synthesis plus the downlink path."""
    stack = ss.StackDescription(
        input_shape=(2, 2),
        inner_shape=(3, 3),
        output_shape=(3, 3),
        ac_layers=1,
        pc_layers=2,
        upa_shape=(2, 2),
        slot_count=2,
    )
    scenario = ss.DownlinkScenario(user_count=12, slot_count=2, streams=4)
    return harness.ExperimentConfig(
        kind=harness.ExperimentKind.CUSTOM,
        stack=stack,
        scenario=scenario,
        sweep=harness.SweepAxes(user_counts=(6, 12)),
        trial_count=trials,
        master_seed=seed,
        pgd={"max_iterations": 40},
    )


class TestConfigIO:
    def test_round_trip(self):
        config = tiny_downlink_config()
        again = harness.config_from_dict(json.loads(json.dumps(harness.config_to_dict(config))))
        assert again == config

    def test_unknown_fields_rejected_at_every_level(self):
        base = harness.config_to_dict(tiny_downlink_config())
        for mutation, message in (
            ({"bogus": 1}, "unknown config fields: bogus"),
            ({"stack": {**base["stack"], "oops": 2}}, "unknown stack fields: oops"),
            ({"scenario": {**base["scenario"], "what": 3}}, "unknown scenario fields: what"),
            ({"sweep": {**base["sweep"], "axis": []}}, "unknown sweep fields: axis"),
            ({"pgd": {"nope": 4}}, "unknown pgd fields: nope"),
        ):
            with pytest.raises(ss.ConfigurationError, match=message):
                harness.config_from_dict({**base, **mutation})

    def test_missing_required_fields(self):
        with pytest.raises(ss.ConfigurationError, match="missing config fields"):
            harness.config_from_dict({"kind": "custom"})


class TestValidation:
    def test_all_violations_listed(self):
        config = dataclasses.replace(
            tiny_downlink_config(),
            trial_count=0,
            eta_feedback=0.0,
            scenario=ss.DownlinkScenario(user_count=0, streams=3),
        )
        with pytest.raises(ss.ValidationError) as excinfo:
            harness.run_experiment(config)
        message = str(excinfo.value)
        assert "trial_count" in message
        assert "eta_feedback" in message
        assert "user_count" in message
        assert "must match the stack's antenna count" in message

    def test_non_square_swept_size_rejected(self):
        config = dataclasses.replace(tiny_downlink_config(), sweep=harness.SweepAxes(inner_counts=(10,)))
        with pytest.raises(ss.ValidationError, match="perfect squares"):
            harness.run_experiment(config)

    def test_training_budget_warning(self):
        config = dataclasses.replace(tiny_downlink_config(), sweep=harness.SweepAxes(slot_counts=(3,)))
        # V/N = 9/4, so three slots exceed the training budget.
        with pytest.warns(UserWarning, match="training-overhead budget"):
            harness.run_experiment(config)


class TestSweep:
    def test_point_expansion_order(self):
        sweep = harness.SweepAxes(inner_counts=(25, 36), pc_layer_counts=(4, 5))
        config = dataclasses.replace(tiny_downlink_config(), sweep=sweep)
        points = harness.sweep_points(config)
        assert points[0] == {"inner_cells": 25, "pc_layers": 4}
        assert points[1] == {"inner_cells": 25, "pc_layers": 5}
        assert len(points) == 4

    def test_stack_for_point_applies_axes(self):
        base = tiny_downlink_config().stack
        desc = harness.stack_for_point(base, {"inner_cells": 36, "pc_layers": 7, "slots": 3})
        assert desc.inner_shape == (6, 6)
        assert desc.pc_layers == 7
        assert desc.slot_count == 3


class TestRunExperiment:
    def test_records_structure_and_determinism(self):
        config = tiny_downlink_config()
        first = harness.run_experiment(config)
        second = harness.run_experiment(config)
        assert len(first) == len(second) > 0
        for a, b in zip(first, second):
            assert (a.experiment, a.sweep, a.metric, a.seed) == (b.experiment, b.sweep, b.metric, b.seed)
            assert a.value == b.value  # bit-identical, elapsed_s excluded
        metrics = {r.metric for r in first}
        assert {"objective_db", "ta_sum_rate", "ta_sum_rate_baseline", "fairness_coherence",
                "overhead_train_partial", "training_budget_ok"} <= metrics

    def test_synthesis_shared_across_user_sweep(self):
        records = harness.run_experiment(tiny_downlink_config())
        by_point = {}
        for r in records:
            if r.metric == "objective_db":
                by_point.setdefault(dict(r.sweep)["users"], []).append(r.value)
        assert by_point[6] == by_point[12]

    def test_failed_trial_recorded_and_run_continues(self, monkeypatch):
        config = tiny_downlink_config(trials=2)
        real = harness.generate_target
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 1:
                raise FloatingPointError("synthetic numeric failure")
            return real(*args, **kwargs)

        monkeypatch.setattr(harness, "generate_target", flaky)
        records = harness.run_experiment(config)
        failed = [r for r in records if r.metric == "trial_failed"]
        assert len(failed) == 1
        ok = [r for r in records if r.metric == "ta_sum_rate"]
        assert len(ok) == 3  # 2 points x 2 trials, minus the failed trial

    def test_overhead_metrics_match_formulas(self):
        records = harness.run_experiment(tiny_downlink_config(trials=1))
        values = {dict(r.sweep)["users"]: r.value for r in records if r.metric == "overhead_feedback_partial"}
        assert values == {6: 12.0, 12: 24.0}


class TestSummaries:
    def test_singleton_statistics(self):
        rec = harness.ResultRecord("custom", (("users", 5),), "m", 2.0, 1, 0.0)
        rows = harness.summarize([rec])
        assert rows[0]["median"] == rows[0]["mean"] == 2.0
        assert rows[0]["count"] == 1

    def test_simple_stats(self):
        records = [
            harness.ResultRecord("custom", (("users", 5),), "m", v, i, 0.0) for i, v in enumerate([1.0, 2.0, 3.0])
        ]
        row = harness.summarize(records)[0]
        assert row["median"] == 2.0 and row["mean"] == 2.0

    def test_nearest_rank_percentiles_match_sort_oracle(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(0, 10, 37)
        records = [harness.ResultRecord("custom", (), "m", float(v), i, 0.0) for i, v in enumerate(values)]
        row = harness.summarize(records)[0]
        ordered = sorted(values)
        assert row["p10"] == ordered[int(np.ceil(0.1 * 37)) - 1]
        assert row["p90"] == ordered[int(np.ceil(0.9 * 37)) - 1]

    def test_all_failed_point_flagged(self):
        records = [harness.ResultRecord("custom", (("users", 5),), "trial_failed", 1.0, 0, 0.0)]
        rows = harness.summarize(records)
        assert rows == [{"users": 5, "metric": "all", "count": 0, "flagged": True}]


class TestCsv:
    def test_schema_and_round_trip(self, tmp_path):
        records = harness.run_experiment(tiny_downlink_config(trials=1))
        path = tmp_path / "results.csv"
        harness.write_csv(records, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "experiment,users,metric,value,seed,elapsed_s"
        assert len(lines) == 1 + len(records)
        first = lines[1].split(",")
        assert first[0] == "custom"
        assert float(first[3]) == records[0].value

    def test_summary_json_contains_resolved_config(self, tmp_path):
        config = tiny_downlink_config(trials=1)
        records = harness.run_experiment(config)
        path = tmp_path / "summary.json"
        harness.write_summary_json(records, config, path)
        payload = json.loads(path.read_text())
        assert payload["config"]["scenario"]["pathloss_exponent"] == 3.2
        assert payload["config"]["master_seed"] == config.master_seed
        assert any(row["metric"] == "ta_sum_rate" for row in payload["summary"])


class TestPresetsAndScale:
    def test_fig3_preset_axes(self):
        config = harness.fig3_config()
        assert config.kind is harness.ExperimentKind.SYNTH_SWEEP_LAYERS
        assert config.sweep.inner_counts == (25, 36, 49, 64)
        assert config.sweep.pc_layer_counts == tuple(range(4, 15))
        assert config.stack.input_shape == (3, 3) and config.stack.output_shape == (5, 5)

    def test_fig5_preset_full_size(self):
        config = harness.fig5_config()
        assert config.stack.inner_shape == (24, 24)
        assert config.stack.input_shape == (10, 10)
        assert config.stack.output_shape == (3, 3)
        assert config.scenario.slot_count == 2
        assert config.trial_count == 100

    def test_scale_shrinks_consistently(self):
        config = harness.fig5_config(scale=0.25)
        assert config.stack.inner_shape == (12, 12)
        assert config.stack.input_shape == (5, 5)
        assert config.stack.output_shape == (2, 2)
        assert min(config.sweep.user_counts) >= config.scenario.streams
        assert harness.run_experiment  # config validates below
        problems = harness.validate_config(config)
        assert problems == []

    def test_scale_bounds(self):
        with pytest.raises(ValueError):
            harness.apply_scale(harness.fig5_config(), 1.5)
