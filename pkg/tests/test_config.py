"""Config loading: defaults, file parsing, overrides, rejection rules."""

import pytest

from modgraph.config import ConfigError, load_run_config, resolved_text


def test_defaults_match_reference_operating_point():
    cfg = load_run_config()
    assert cfg.train.lr == pytest.approx(1e-3)
    assert cfg.train.batch_size == 256
    assert cfg.train.epochs == 100
    assert cfg.train.early_stop_patience == 20
    assert cfg.model.n_dft == 128
    assert cfg.model.n_nodes == 128
    assert cfg.model.node_feat == 16
    assert cfg.model.out_channels == 16
    assert cfg.model.tau == 11
    assert cfg.model.gcn_layers == 4
    assert cfg.model.pool_layers == 2
    assert cfg.model.coarsen == 4
    assert len(cfg.synth.schemes) == 11
    assert len(cfg.synth.snrs_db) == 20


def test_file_values_applied(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\ntau = 7\nadjacency = knn\n\n[train]\nlr = 0.01\naugment = false\n")
    cfg = load_run_config(ini)
    assert cfg.model.tau == 7
    assert cfg.model.adjacency == "knn"
    assert cfg.train.lr == pytest.approx(0.01)
    assert cfg.train.augment is False


def test_overrides_beat_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\ntau = 7\n")
    cfg = load_run_config(ini, overrides=["model.tau=9"])
    assert cfg.model.tau == 9


def test_unknown_key_and_section_rejected(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\nbogus = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_run_config(ini)
    ini.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_run_config(ini)
    with pytest.raises(ConfigError, match="unknown key"):
        load_run_config(overrides=["train.turbo=yes"])


def test_bad_values_rejected():
    with pytest.raises(ConfigError, match="bad value"):
        load_run_config(overrides=["model.tau=eleven"])
    with pytest.raises(ConfigError, match="bad value"):
        load_run_config(overrides=["train.augment=perhaps"])
    with pytest.raises(ConfigError, match="section.key=value"):
        load_run_config(overrides=["model.tau"])


def test_cross_section_consistency_enforced():
    with pytest.raises(ConfigError, match="n_samples"):
        load_run_config(overrides=["synth.n_samples=64"])
    # changing both sides together is fine
    cfg = load_run_config(overrides=["synth.n_samples=64", "model.n_nodes=64"])
    assert cfg.model.n_nodes == 64
    with pytest.raises(ValueError):
        load_run_config(overrides=["model.variant=turbo"])


def test_scheme_list_parsing():
    cfg = load_run_config(overrides=["synth.schemes=BPSK, QPSK", "synth.snrs_db=0,10"])
    assert cfg.synth.schemes == ("BPSK", "QPSK")
    assert cfg.synth.snrs_db == (0, 10)
    with pytest.raises(ConfigError):
        load_run_config(overrides=["synth.schemes=BPSK,BPSK"])


def test_resolved_text_round_trips(tmp_path):
    cfg = load_run_config(overrides=["model.tau=5", "train.lr=0.002"])
    text = resolved_text(cfg)
    assert "[synth]" in text and "tau = 5" in text and "lr = 0.002" in text
    echo = tmp_path / "echo.ini"
    echo.write_text(text)
    cfg2 = load_run_config(echo)
    assert cfg2 == cfg


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "absent.ini")
