import json

import pytest

from config import GibbsConfig, LoggingConfig, RuntimeConfig, load_run_config
from utils.helpers import parse_override
from utils.validators import ValidationError


def test_defaults():
    cfg = load_run_config()
    gibbs = cfg.gibbs
    assert gibbs.iterations == 5000 and gibbs.burnin == 0.2 and gibbs.thin == 1
    assert (gibbs.n_blocks, gibbs.n_cross, gibbs.n_within) == (10, 6, 6)
    assert (gibbs.a1, gibbs.a2, gibbs.alpha) == (2.0, 2.0, 1.0)
    assert gibbs.kernels.mu == gibbs.kernels.x == 0.05
    assert gibbs.kernels.jitter == 1e-8
    assert (gibbs.scan.f_min, gibbs.scan.decay) == (0.1, 5.0)
    assert gibbs.pg_threshold == 100
    assert gibbs.pair_counting == "ordered"
    assert cfg.synth is None


def test_file_and_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({'gibbs': {'iterations': 50, 'kernels': {'mu': 0.1}}, 'data': {'holdout_steps': 2}}))
    cfg = load_run_config(path, ["gibbs.thin=5", "gibbs.kernels.x=0.2", "synth.n_nodes=8", "synth.n_blocks=2"])
    assert cfg.gibbs.iterations == 50 and cfg.gibbs.thin == 5
    assert cfg.gibbs.kernels.mu == 0.1 and cfg.gibbs.kernels.x == 0.2
    assert cfg.data.holdout_steps == 2
    assert cfg.synth.n_nodes == 8
    assert cfg.echo()['gibbs']['thin'] == 5


def test_unknown_key_is_named():
    with pytest.raises(ValidationError) as excinfo:
        load_run_config(overrides=["gibbs.bogus=1"])
    assert excinfo.value.field == "gibbs.bogus"
    assert excinfo.value.exit_code == 2


def test_out_of_range_value():
    with pytest.raises(ValidationError) as excinfo:
        load_run_config(overrides=["gibbs.burnin=1.5"])
    assert excinfo.value.field == "gibbs.burnin"


def test_missing_synth_size():
    with pytest.raises(ValidationError) as excinfo:
        load_run_config(overrides=["synth.n_blocks=2"])
    assert excinfo.value.field == "synth.n_nodes"


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError) as excinfo:
        load_run_config(path)
    assert excinfo.value.code == "invalid_json"


def test_given_init_needs_assignments():
    with pytest.raises(ValidationError):
        load_run_config(overrides=["gibbs.init=given"])


def test_recording_schedule():
    cfg = GibbsConfig(iterations=10, burnin=0.2, thin=3)
    assert cfg.burnin_iterations == 2
    assert cfg.record_count == 2
    assert [it for it in range(10) if cfg.is_recorded(it)] == [4, 7]


def test_recording_without_burnin():
    cfg = GibbsConfig(iterations=5, burnin=0.0, thin=1)
    assert [it for it in range(5) if cfg.is_recorded(it)] == [0, 1, 2, 3, 4]


def test_dmn_mode():
    cfg = GibbsConfig().dmn(7)
    assert cfg.n_blocks == 7 and cfg.fixed_assignments


def test_parse_override():
    assert parse_override("gibbs.kernels.mu=0.5") == (["gibbs", "kernels", "mu"], 0.5)
    assert parse_override("gibbs.pair_counting=unordered") == (["gibbs", "pair_counting"], "unordered")
    with pytest.raises(ValueError):
        parse_override("gibbs.thin")


def test_environment_settings(monkeypatch):
    monkeypatch.setenv("DMBN_THREADS", "3")
    monkeypatch.setenv("DMBN_DEBUG_CHECKS", "true")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    runtime = RuntimeConfig()
    assert runtime.threads == 3 and runtime.debug_checks
    assert LoggingConfig().level == "DEBUG"
