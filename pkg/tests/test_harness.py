import hashlib
import json
from dataclasses import replace

import numpy as np
import pandas as pd
import pandera.errors
import pytest

from errors import ConfigurationError, ContractError
from harness.config import RunConfig, load_config, parse_sweep, sweep_configs
from harness.histogram import HISTOGRAM_COLUMNS, emit_style_histogram
from harness.report import (
    build_report,
    comparison_frame,
    confidence_interval,
    results_frame,
    run_id_for,
    write_report,
)
from model.prompt import StylePrompt, compute_target_stats
from training.episode import EpisodeResult


def _result(index, accuracy, accuracy_lp=None, shifts=()):
    return EpisodeResult(
        episode_index=index,
        episode_hash=hashlib.sha256(str(index).encode()).hexdigest(),
        accuracy=accuracy,
        accuracy_lp=accuracy_lp,
        extra_accuracy=None,
        ce_trace=[1.0, 0.5],
        group_sizes=[3, 4],
        shift_trace=list(shifts),
    )


def test_defaults_without_a_file():
    config = load_config(None)
    assert config == RunConfig()
    assert config.alpha == 0.7
    assert config.gamma == 0.4
    assert config.episodes == 100
    assert config.effective_sigma == 0.1


def test_empty_file_gives_the_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("")
    assert load_config(path) == RunConfig()


def test_file_values_are_typed(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("EPISODES=12\nalpha=0.5\nhidden_widths=16,8\ntrack_shift=false\npreset=near\n")
    config = load_config(path)
    assert config.episodes == 12
    assert config.alpha == 0.5
    assert config.hidden_widths == (16, 8)
    assert config.track_shift is False
    assert config.effective_sigma == 2.0


def test_flags_override_the_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("episodes=10\nseed=3\n")
    config = load_config(path, {"episodes": 50, "seed": None})
    assert config.episodes == 50
    assert config.seed == 3


def test_out_of_range_values_name_the_key(tmp_path):
    with pytest.raises(ConfigurationError, match="alpha") as excinfo:
        load_config(None, {"alpha": 1.5})
    assert excinfo.value.key == "alpha"

    path = tmp_path / "run.cfg"
    path.write_text("momentum=1.0\n")
    with pytest.raises(ConfigurationError, match="momentum"):
        load_config(path)


def test_unknown_keys_and_type_mismatches_are_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("learning_rate=0.1\n")
    with pytest.raises(ConfigurationError, match="unknown"):
        load_config(path)

    path.write_text("episodes=many\n")
    with pytest.raises(ConfigurationError, match="episodes"):
        load_config(path)

    with pytest.raises(ConfigurationError, match="config"):
        load_config(tmp_path / "missing.cfg")


def test_cross_field_checks():
    with pytest.raises(ConfigurationError, match="max_epochs"):
        RunConfig(steps=3, max_epochs=20)
    with pytest.raises(ConfigurationError, match="target_classes"):
        RunConfig(way=5, target_classes=4)
    with pytest.raises(ConfigurationError, match="target_per_class"):
        RunConfig(query_per_class=40, target_per_class=40)


def test_explicit_shift_overrides_the_preset():
    assert RunConfig().shift_spec() is None
    spec = RunConfig(dim=3, shift_offset=(1.0,), warp_gamma=2.0).shift_spec()
    assert spec.shift == (1.0, 1.0, 1.0)
    assert spec.scale == (1.0, 1.0, 1.0)
    assert spec.warp_gamma == 2.0
    with pytest.raises(ConfigurationError, match="shift_scale"):
        RunConfig(dim=3, shift_scale=(1.0, 2.0)).shift_spec()


def test_step_size_sweep_keeps_the_schedule_whole():
    config = RunConfig()
    swept = sweep_configs(config, "steps", ["2", "5", "10", "20", "50", "100"])
    assert [c.steps for c in swept] == [2, 5, 10, 20, 50, 100]
    assert [c.max_epochs for c in swept] == [20, 20, 20, 20, 50, 100]
    assert all(c.max_epochs % c.steps == 0 for c in swept)


@pytest.mark.parametrize("bad", ["0", "-3"])
def test_step_size_sweep_rejects_non_positive_steps(bad):
    with pytest.raises(ConfigurationError, match="steps"):
        sweep_configs(RunConfig(), "steps", ["5", bad])


def test_hyperparameter_sweeps():
    swept = sweep_configs(RunConfig(), "alpha", ["0.3", "0.9"])
    assert [c.alpha for c in swept] == [0.3, 0.9]
    with pytest.raises(ConfigurationError, match="sweep"):
        sweep_configs(RunConfig(), "lr", ["0.1"])
    with pytest.raises(ConfigurationError, match="alpha"):
        sweep_configs(RunConfig(), "alpha", ["2.0"])

    assert parse_sweep("gamma=0.2, 0.4") == ("gamma", ["0.2", "0.4"])
    with pytest.raises(ConfigurationError):
        parse_sweep("gamma")


def test_confidence_interval_of_two_values():
    interval = confidence_interval([0.8, 0.6])
    assert interval.mean == pytest.approx(0.7)
    assert interval.ci95 == pytest.approx(1.96 * 0.1414213562 / np.sqrt(2), abs=1e-9)
    assert interval.ci95 == pytest.approx(0.196, abs=1e-3)
    assert not interval.degenerate


def test_confidence_interval_of_one_value_is_degenerate():
    interval = confidence_interval([0.55])
    assert interval.mean == 0.55
    assert interval.ci95 == 0.0
    assert interval.degenerate
    with pytest.raises(ValueError):
        confidence_interval([])


def test_report_is_deterministic_apart_from_the_timestamp(small_config):
    results = [_result(0, 0.8, 0.9, shifts=(0.1, 0.3)), _result(1, 0.6, 0.7)]
    first = build_report(small_config, results, wall_clock_seconds=1.0).to_dict()
    second = build_report(small_config, results, wall_clock_seconds=2.5).to_dict()
    assert first.pop("timestamp") != second.pop("timestamp")
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)

    assert first["accuracy"]["mean"] == pytest.approx(0.7)
    assert first["accuracy_lp"]["mean"] == pytest.approx(0.8)
    assert first["extra_accuracy"] is None
    assert first["max_shift"] == pytest.approx(0.3)
    assert len(first["per_episode"]) == 2
    assert first["run_id"] == run_id_for(small_config)
    assert first["format_version"] == 1


def test_run_id_follows_the_config(small_config):
    assert run_id_for(small_config) == run_id_for(replace(small_config))
    assert run_id_for(small_config) != run_id_for(replace(small_config, seed=8))


def test_report_requires_index_order(small_config):
    with pytest.raises(ValueError, match="ordered"):
        build_report(small_config, [_result(1, 0.5), _result(0, 0.5)])


def test_results_frame_schema(small_config):
    report = build_report(small_config, [_result(0, 0.5), _result(1, 1.0, 0.75)])
    frame = results_frame(report)
    assert list(frame.columns) == [
        "run_id",
        "ablation",
        "episode_idx",
        "episode_hash",
        "accuracy",
        "accuracy_lp",
        "extra_accuracy",
        "max_shift",
    ]
    assert frame["accuracy_lp"].isna().tolist() == [True, False]


def test_results_frame_rejects_impossible_accuracies(small_config):
    report = build_report(small_config, [_result(0, 1.5)])
    with pytest.raises(pandera.errors.SchemaErrors, match="accuracy"):
        results_frame(report)


def test_comparison_frame(small_config):
    full = build_report(small_config, [_result(0, 0.8, 0.9), _result(1, 0.6, 0.7)], label="full")
    baseline = build_report(replace(small_config, ablation="ce_only"), [_result(0, 0.5), _result(1, 0.5)], label="ce_only")
    frame = comparison_frame([full, baseline])
    assert frame["label"].tolist() == ["full", "ce_only"]
    assert frame["mean"].tolist() == pytest.approx([0.7, 0.5])
    assert frame.loc[1, "ci95"] == 0.0
    assert np.isnan(frame.loc[1, "mean_lp"])


def test_write_report(tmp_path, small_config):
    report = build_report(small_config, [_result(0, 0.8), _result(1, 0.6)], label="full")
    json_path = write_report(report, tmp_path / "reports")

    assert json_path == tmp_path / "reports" / "full.json"
    document = json.loads(json_path.read_text())
    assert document["episode_count"] == 2
    assert document["config"]["hidden_widths"] == [8]

    episodes = pd.read_csv(tmp_path / "reports" / "full_episodes.csv")
    assert episodes["episode_idx"].tolist() == [0, 1]


def test_histogram_row_count_and_conservation(episode):
    stats = compute_target_stats(episode.samples)
    after = StylePrompt(np.full(stats.channels, 2.0), np.full(stats.channels, 0.5))
    frame = emit_style_histogram(episode, stats, StylePrompt.identity(stats.channels), after, bins=5)

    assert list(frame.columns) == HISTOGRAM_COLUMNS
    assert len(frame) == stats.channels * 5
    sums = frame.groupby("channel")[["count_before", "count_after"]].sum()
    assert (sums["count_before"] == episode.sample_count).all()
    assert (sums["count_after"] == episode.sample_count).all()


def test_identity_prompts_give_identical_columns(episode):
    stats = compute_target_stats(episode.samples)
    identity = StylePrompt.identity(stats.channels)
    frame = emit_style_histogram(episode, stats, identity, identity, bins=4)
    assert frame["count_before"].tolist() == frame["count_after"].tolist()


def test_histogram_needs_two_bins(episode):
    stats = compute_target_stats(episode.samples)
    with pytest.raises(ContractError, match="bins"):
        emit_style_histogram(episode, stats, None, None, bins=1)
