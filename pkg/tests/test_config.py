import pytest

from interlight.config import (Config, build_loss, build_model, build_pga,
                               build_pic, config_hash, load_config,
                               paper_scale, save_config)


def test_yaml_round_trip(tmp_path):
    cfg = Config()
    cfg.train.epochs = 3
    cfg.model.channels = [8, 8, 16, 32]
    cfg.pga.apply_prob = 0.5
    path = tmp_path / "cfg.yaml"
    save_config(cfg, path)
    loaded = load_config(path)
    assert loaded == cfg


def test_defaults_carry_training_constants():
    cfg = Config()
    assert cfg.train.lr == 2e-4
    assert (cfg.train.beta1, cfg.train.beta2) == (0.9, 0.999)
    assert cfg.model.channels == [36, 36, 72, 144]
    assert cfg.model.prfb_spatial_sizes == [16, 8, 4]
    assert cfg.model.num_atoms == 32
    assert cfg.model.prompt_dim == 512
    assert cfg.model.memory_entries == 16
    assert (cfg.model.lambda_i, cfg.model.lambda_hv) == (1.2, 0.8)
    assert cfg.loss.mu_hvi == 0.5
    assert cfg.loss.lambda_lgim == 1.0
    assert (cfg.pga.gamma_low, cfg.pga.gamma_high) == (0.95, 1.05)
    assert cfg.pga.apply_prob == 0.3
    assert cfg.pga.tau_d == 0.05
    assert cfg.pic.beta0 == 0.1
    assert cfg.model.k_init == 0.2


def test_paper_scale_restores_published_schedule():
    cfg = paper_scale(Config())
    assert cfg.train.epochs == 1500
    assert cfg.train.batch_size == 8
    assert cfg.train.crop_size == 256
    # everything else untouched
    assert cfg.train.lr == 2e-4
    assert cfg.model == Config().model


def test_hash_stable_and_sensitive():
    a, b = Config(), Config()
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    b.train.lr = 1e-4
    assert config_hash(a) != config_hash(b)


def test_hash_ignores_dict_insertion_order(tmp_path):
    path = tmp_path / "cfg.yaml"
    save_config(Config(), path)
    assert config_hash(load_config(path)) == config_hash(Config())


def test_unknown_section_rejected():
    with pytest.raises(ValueError, match="unknown config section"):
        Config.from_dict({"trian": {}})


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown key"):
        Config.from_dict({"train": {"learning_rate": 1e-3}})


def test_partial_document_fills_defaults():
    cfg = Config.from_dict({"train": {"epochs": 7}})
    assert cfg.train.epochs == 7
    assert cfg.train.batch_size == 2
    assert cfg.model.use_adpg


@pytest.mark.parametrize("field,value", [
    ("batch_size", 0), ("crop_size", 65), ("epochs", 0)])
def test_train_validation(field, value):
    with pytest.raises(ValueError):
        Config.from_dict({"train": {field: value}})


def test_non_mapping_file_rejected(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("- just\n- a\n- list\n")
    with pytest.raises(ValueError, match="not a mapping"):
        load_config(path)


def test_factories_respect_config():
    cfg = Config()
    cfg.model.channels = [8, 8, 16, 32]
    cfg.model.num_atoms = 4
    cfg.model.prompt_dim = 16
    cfg.model.use_lgim = False
    cfg.loss.mu_hvi = 0.25
    cfg.pga.apply_prob = 0.0
    model = build_model(cfg)
    assert model.bank_i is None
    assert model.channels == (8, 8, 16, 32)
    assert build_loss(cfg).cfg.mu_hvi == 0.25
    assert build_pga(cfg).apply_prob == 0.0
    pic = build_pic(cfg, total_steps=123)
    assert pic.total_steps == 123
    assert build_pic(cfg, total_steps=0).total_steps == 1
