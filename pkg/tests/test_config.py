"""Run configuration defaults and validation."""

import json

import pytest

from orbitnet.config import RunConfig, load_config


class TestDefaults:
    def test_reference_configuration(self):
        cfg = RunConfig()
        assert cfg.filter_size == 6
        assert cfg.num_layers == 4
        assert cfg.num_groups == 5
        assert cfg.group_order == 4
        assert cfg.alpha == 0.01
        assert cfg.lr == 0.01
        assert cfg.epochs == 100
        assert cfg.mu == 0.001
        assert cfg.loss_variant == "aux_inverse"

    def test_mu_default_tracks_variant(self):
        assert RunConfig(loss_variant="svd_sum").mu == 0.01
        assert RunConfig(loss_variant="svd_logdet").mu == 0.01
        assert RunConfig(loss_variant="aux_inverse").mu == 0.001
        assert RunConfig(loss_variant="svd_sum", mu=0.5).mu == 0.5


class TestValidation:
    def test_valid_default_passes(self):
        RunConfig().validate()

    def test_all_problems_enumerated_before_work(self):
        cfg = RunConfig(dataset="imagenet", task="detection", epochs=-1,
                        alpha=0.0)
        with pytest.raises(ValueError) as err:
            cfg.validate()
        message = str(err.value)
        for fragment in ("dataset", "task", "epochs", "alpha"):
            assert fragment in message

    def test_bad_loss_variant(self):
        with pytest.raises(ValueError, match="loss_variant"):
            RunConfig(loss_variant="ridge").validate()

    def test_bad_subset(self):
        with pytest.raises(ValueError, match="subset"):
            RunConfig(subset=0).validate()


class TestLoadConfig:
    def test_file_plus_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"epochs": 7, "seed": 3}))
        cfg = load_config(path, {"seed": 9, "out_dir": None})
        assert cfg.epochs == 7
        assert cfg.seed == 9          # override wins
        assert cfg.out_dir == "runs/default"   # None override ignored

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"leerning_rate": 1.0}))
        with pytest.raises(ValueError, match="leerning_rate"):
            load_config(path)

    def test_no_file_all_defaults(self):
        assert load_config().epochs == 100
