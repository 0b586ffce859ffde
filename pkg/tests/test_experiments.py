import copy

import numpy as np
import pytest

from dasf.experiments import (
    ConfigError,
    ExperimentConfig,
    StudyResult,
    _build_problem,
    load_config,
    run_study,
    run_tracking,
    tracking_reference,
    validate_config,
)
from dasf.signals import DriftSpec, LambdaSchedule, SignalModel


def _base_raw():
    return {
        "schema_version": 1,
        "problem": {"kind": "mmse", "n_filters": 1},
        "network": {"kind": "fully_connected", "nodes": 3, "channels": 2},
        "run": {"monte_carlo_runs": 2, "iterations": 3, "samples": 400, "seed": 0},
    }


def _errors_of(raw):
    with pytest.raises(ConfigError) as info:
        validate_config(raw)
    return info.value.errors


# ---------------------------------------------------------------------------
# validation


def test_minimal_config_resolves_with_defaults():
    config = validate_config(_base_raw())
    assert isinstance(config, ExperimentConfig)
    assert config.problem_kind == "mmse"
    assert config.filter_widths == (1,)
    assert config.channels == (2, 2, 2)
    assert config.total_channels == 6
    assert config.sample_mode == "batch"
    assert config.out_dir == "results"
    assert any("run.mode" in line for line in config.applied_defaults)
    assert any("output.dir" in line for line in config.applied_defaults)


def test_schema_version_is_mandatory():
    raw = _base_raw()
    del raw["schema_version"]
    assert any("schema_version" in e for e in _errors_of(raw))
    raw["schema_version"] = 2
    assert any("only version 1" in e for e in _errors_of(raw))


def test_all_violations_reported_together():
    raw = _base_raw()
    raw["problem"] = {"kind": "nonsense"}          # bad kind, missing width
    raw["network"]["nodes"] = -2
    raw["run"]["iterations"] = -1
    errors = _errors_of(raw)
    assert len(errors) >= 4
    joined = "\n".join(errors)
    assert "problem.kind" in joined
    assert "problem.n_filters" in joined
    assert "network.nodes" in joined
    assert "run.iterations" in joined
    # the exception message renders one bullet per failure
    with pytest.raises(ConfigError) as info:
        validate_config(raw)
    assert str(info.value).count("\n  - ") == len(errors)


def test_total_channels_mismatch_names_both_values():
    raw = _base_raw()
    raw["network"]["total_channels"] = 7
    (error,) = _errors_of(raw)
    assert "7" in error and "does not match the channel sum 6" in error
    raw["network"]["total_channels"] = 6
    assert validate_config(raw).total_channels == 6


def test_unknown_sections_and_keys_rejected():
    raw = _base_raw()
    raw["extra"] = {}
    raw["problem"]["bogus"] = 1
    raw["run"]["typo_key"] = 2
    errors = _errors_of(raw)
    assert any(e.startswith("extra:") for e in errors)
    assert any("problem.bogus" in e for e in errors)
    assert any("run.typo_key" in e for e in errors)


def test_channels_list_must_match_nodes():
    raw = _base_raw()
    raw["network"]["channels"] = [2, 3]
    assert any("does not match nodes" in e for e in _errors_of(raw))
    raw["network"]["channels"] = [2, 3, 4]
    assert validate_config(raw).channels == (2, 3, 4)


def test_channel_entries_validated():
    raw = _base_raw()
    raw["network"]["channels"] = [2, 0, 2]
    assert any("positive integers" in e for e in _errors_of(raw))
    raw["network"]["channels"] = "six"
    assert any("expected an integer or a list" in e for e in _errors_of(raw))


def test_edge_prob_rules():
    raw = _base_raw()
    raw["network"]["kind"] = "erdos_renyi"
    assert any("edge_prob: required" in e for e in _errors_of(raw))
    raw["network"]["edge_prob"] = 0.8
    assert validate_config(raw).edge_prob == 0.8
    raw["network"]["edge_prob"] = 1.5
    assert any("must be in (0, 1]" in e for e in _errors_of(raw))
    raw2 = _base_raw()
    raw2["network"]["edge_prob"] = 0.5
    assert any("not meaningful" in e for e in _errors_of(raw2))


def test_type_errors_are_specific():
    raw = _base_raw()
    raw["run"]["iterations"] = True
    raw["run"]["samples"] = "many"
    raw["problem"]["kind"] = 3
    errors = _errors_of(raw)
    assert any("run.iterations: expected an integer" in e for e in errors)
    assert any("run.samples: expected an integer" in e for e in errors)
    assert any("problem.kind: expected a string" in e for e in errors)


def test_filter_width_sweep_accepted():
    raw = _base_raw()
    raw["problem"]["n_filters"] = [1, 3, 5, 7]
    raw["network"] = {"kind": "erdos_renyi", "nodes": 30, "channels": 15,
                      "edge_prob": 0.8}
    config = validate_config(raw)
    assert config.filter_widths == (1, 3, 5, 7)
    with pytest.raises(ValueError):
        config.n_filters
    expanded = config.expand_filter_sweep()
    assert [c.n_filters for c in expanded] == [1, 3, 5, 7]
    assert all(c.seed == config.seed for c in expanded)


def test_filter_width_sweep_must_be_distinct():
    raw = _base_raw()
    raw["problem"]["n_filters"] = [1, 3, 3]
    assert any("distinct" in e for e in _errors_of(raw))
    raw["problem"]["n_filters"] = []
    assert any("empty sweep" in e for e in _errors_of(raw))
    raw["problem"]["n_filters"] = [1, 0]
    assert any("positive integers" in e for e in _errors_of(raw))


def test_mmse_source_count_must_match_width():
    raw = _base_raw()
    raw["signals"] = {"sources": 2}
    assert any("signals.sources" in e for e in _errors_of(raw))
    raw["signals"] = {"sources": 1}
    assert validate_config(raw).sources == 1


def test_drift_semantics():
    raw = _base_raw()
    raw["run"]["mode"] = "adaptive"
    raw["signals"] = {"drift": {"delta_std": 0.5,
                                "schedule": [[0, 0.0], [3, 1.0]]}}
    config = validate_config(raw)
    assert config.drift is not None
    assert config.drift.schedule == ((0.0, 0.0), (3.0, 1.0))

    batchy = copy.deepcopy(raw)
    batchy["run"]["mode"] = "batch"
    assert any("adaptive" in e for e in _errors_of(batchy))

    wrong_kind = copy.deepcopy(raw)
    wrong_kind["problem"]["kind"] = "qcqp"
    assert any("mmse" in e for e in _errors_of(wrong_kind))

    wide = copy.deepcopy(raw)
    wide["problem"]["n_filters"] = 2
    assert any("width must be 1" in e for e in _errors_of(wide))


def test_drift_schedule_validation():
    raw = _base_raw()
    raw["run"]["mode"] = "adaptive"
    raw["signals"] = {"drift": {"schedule": [[5, 0.0], [2, 1.0]]}}
    assert any("non-decreasing" in e for e in _errors_of(raw))
    raw["signals"]["drift"]["schedule"] = [[0, 0.0], [2, 1.5]]
    assert any("[0, 1]" in e for e in _errors_of(raw))
    raw["signals"]["drift"]["schedule"] = []
    assert any("non-empty" in e for e in _errors_of(raw))
    raw["signals"]["drift"] = {"schedule": [[0, 0.0]], "typo": 1}
    assert any("drift.typo" in e for e in _errors_of(raw))


def test_low_sample_count_warns():
    raw = _base_raw()
    raw["problem"]["n_filters"] = 2
    raw["run"]["samples"] = 5       # below channels + width * (nodes - 1)
    with pytest.warns(RuntimeWarning, match="rank deficient"):
        validate_config(raw)


def test_with_overrides():
    config = validate_config(_base_raw())
    changed = config.with_overrides(seed=9, runs=7, iterations=11,
                                    out_dir="elsewhere", sample_mode="adaptive")
    assert (changed.seed, changed.runs, changed.iterations) == (9, 7, 11)
    assert changed.out_dir == "elsewhere"
    assert changed.sample_mode == "adaptive"
    assert config.seed == 0 and config.runs == 2     # original untouched


def test_override_recheck_catches_new_conflicts():
    raw = _base_raw()
    raw["run"]["mode"] = "adaptive"
    raw["signals"] = {"drift": {"schedule": [[0, 0.0], [3, 1.0]]}}
    config = validate_config(raw)
    with pytest.raises(ConfigError):
        config.with_overrides(sample_mode="batch")


def test_load_config_error_paths(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("problem: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(bad)
    listy = tmp_path / "list.yaml"
    listy.write_text("- a\n- b\n")
    with pytest.raises(ConfigError, match="top level"):
        load_config(listy)


# ---------------------------------------------------------------------------
# deterministic problem construction


def test_problem_terms_deterministic_in_term_seed():
    raw = _base_raw()
    raw["problem"] = {"kind": "qcqp", "n_filters": 2, "term_seed": 5}
    config = validate_config(raw)
    p1 = _build_problem(config, 2)
    p2 = _build_problem(config, 2)
    assert np.array_equal(p1.linear_term, p2.linear_term)
    assert np.array_equal(p1.gain_vector, p2.gain_vector)
    assert p1.radius == p2.radius
    assert p1.radius == pytest.approx(
        1.5 * np.linalg.norm(p1.target_response) / np.linalg.norm(p1.gain_vector))

    raw["problem"]["term_seed"] = 6
    p3 = _build_problem(validate_config(raw), 2)
    assert not np.array_equal(p1.linear_term, p3.linear_term)


def test_tracking_reference_constant_schedule():
    # weight pinned at zero: the window-averaged statistics are the p0 model
    p0 = np.array([0.4, -0.2, 0.7])
    spec = DriftSpec(p0=p0, delta=np.array([1.0, 1.0, 1.0]),
                     schedule=LambdaSchedule((0.0,), (0.0,)))
    model = SignalModel(channels=(3,), source_var=2.0, noise_var=0.3, drift=spec)
    ref = tracking_reference(model, 0, 500)
    cov = 2.0 * np.outer(p0, p0) + 0.3 * np.eye(3)
    expected = np.linalg.solve(cov, 2.0 * p0[:, None])
    assert np.allclose(ref, expected, atol=1e-12)


# ---------------------------------------------------------------------------
# study execution and outputs


def _study_raw(tmp_path, **run_over):
    raw = _base_raw()
    raw["run"].update({"monte_carlo_runs": 2, "iterations": 3, "samples": 300})
    raw["run"].update(run_over)
    raw["output"] = {"dir": str(tmp_path / "out")}
    return raw


def test_zero_iteration_study_reports_initial_error(tmp_path):
    raw = _study_raw(tmp_path, monte_carlo_runs=1, iterations=0)
    config = validate_config(raw)
    study = run_study(config)
    assert isinstance(study, StudyResult)
    assert study.epsilon.shape == (1, 1)
    assert study.epsilon[0, 0] > 0
    agg = (tmp_path / "out" / "aggregate.csv").read_text().strip().split("\n")
    assert agg[0] == "iter,epsilon_median,epsilon_mean,epsilon_sem"
    assert len(agg) == 2
    row = agg[1].split(",")
    assert row[0] == "0"
    assert float(row[1]) == pytest.approx(study.epsilon[0, 0])
    run_csv = (tmp_path / "out" / "run_0.csv").read_text().strip().split("\n")
    assert len(run_csv) == 1      # header only: no iterations were performed


def test_study_outputs_complete_and_reproducible(tmp_path):
    config_a = validate_config(_study_raw(tmp_path / "a"))
    config_b = validate_config(_study_raw(tmp_path / "b"))
    study_a = run_study(config_a)
    study_b = run_study(config_b)
    assert np.array_equal(study_a.epsilon, study_b.epsilon)
    out_a, out_b = tmp_path / "a" / "out", tmp_path / "b" / "out"
    for name in ("aggregate.csv", "epsilon.dat", "epsilon.gp",
                 "run_0.csv", "run_1.csv", "study.meta"):
        assert (out_a / name).exists(), name
    assert (out_a / "aggregate.csv").read_bytes() == (out_b / "aggregate.csv").read_bytes()
    assert (out_a / "run_1.csv").read_bytes() == (out_b / "run_1.csv").read_bytes()
    # columns: initial point plus one per update
    assert study_a.epsilon.shape == (2, 4)
    assert np.all(np.isfinite(study_a.epsilon))
    meta = (out_a / "study.meta").read_text()
    assert "resolved_config" in meta and "completed_runs: 2" in meta


def test_seed_override_changes_trajectories(tmp_path):
    config = validate_config(_study_raw(tmp_path))
    study_a = run_study(config, write=False)
    study_b = run_study(config.with_overrides(seed=123), write=False)
    assert not np.array_equal(study_a.epsilon, study_b.epsilon)
    study_c = run_study(config.with_overrides(runs=3), write=False)
    assert study_c.epsilon.shape[0] == 3
    # same master seed: shared run indices produced identical trajectories
    assert np.allclose(study_c.epsilon[:2], study_a.epsilon)


def test_sweep_writes_per_width_subdirs(tmp_path):
    raw = _study_raw(tmp_path, monte_carlo_runs=1, iterations=2)
    raw["problem"]["kind"] = "scqp"
    raw["problem"]["n_filters"] = [1, 2]
    studies = run_study(validate_config(raw))
    assert isinstance(studies, list) and len(studies) == 2
    assert [s.n_filters for s in studies] == [1, 2]
    assert (tmp_path / "out" / "q1" / "aggregate.csv").exists()
    assert (tmp_path / "out" / "q2" / "aggregate.csv").exists()
    assert not (tmp_path / "out" / "aggregate.csv").exists()


def test_workers_do_not_change_results(tmp_path):
    serial = validate_config(_study_raw(tmp_path / "serial"))
    parallel = validate_config(_study_raw(tmp_path / "parallel", workers=2))
    study_s = run_study(serial, write=False)
    study_p = run_study(parallel, write=False)
    assert np.array_equal(study_s.epsilon, study_p.epsilon)


def test_adaptive_mode_uses_fresh_batches(tmp_path):
    raw = _study_raw(tmp_path, monte_carlo_runs=1, iterations=4, mode="adaptive")
    study = run_study(validate_config(raw), write=False)
    # estimation noise floors the error: it must stay strictly positive
    assert study.epsilon.shape == (1, 5)
    assert np.all(study.epsilon > 0)


def test_tracking_study_and_outputs(tmp_path):
    raw = _study_raw(tmp_path, monte_carlo_runs=2, iterations=3, mode="adaptive")
    raw["signals"] = {"drift": {"delta_std": 0.4,
                                "schedule": [[0, 0.0], [3, 1.0]]}}
    config = validate_config(raw)
    study = run_study(config)
    assert study.config.drift is not None
    assert study.epsilon.shape == (2, 4)
    out = tmp_path / "out"
    lam_lines = (out / "lambda.dat").read_text().strip().split("\n")
    assert lam_lines[0].startswith("#")
    values = [float(line.split()[1]) for line in lam_lines[1:]]
    assert values == pytest.approx([0.0, 1 / 3, 2 / 3, 1.0])
    assert "lambda" in (out / "epsilon.gp").read_text()


def test_run_tracking_rejects_non_drift_config(tmp_path):
    config = validate_config(_study_raw(tmp_path))
    with pytest.raises(ConfigError) as info:
        run_tracking(config, write=False)
    assert any("drift" in e for e in info.value.errors)


def test_topology_ordering_fully_connected_beats_tree(tmp_path):
    base = {
        "schema_version": 1,
        "problem": {"kind": "qcqp", "n_filters": 2, "term_seed": 2},
        "network": {"kind": "fully_connected", "nodes": 5, "channels": 2},
        "run": {"monte_carlo_runs": 4, "iterations": 8, "samples": 800, "seed": 7},
        "output": {"dir": str(tmp_path)},
    }
    fc = validate_config(base)
    tree_raw = copy.deepcopy(base)
    tree_raw["network"]["kind"] = "random_tree"
    tree = validate_config(tree_raw)
    study_fc = run_study(fc, write=False)
    study_tree = run_study(tree, write=False)
    assert study_fc.engine_variant == "fc"
    assert study_tree.engine_variant == "ti"
    med_fc = np.median(study_fc.epsilon[:, -1])
    med_tree = np.median(study_tree.epsilon[:, -1])
    assert med_fc <= med_tree
