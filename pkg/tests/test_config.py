import pytest

from lsi.config import ConfigError, RunConfig


class TestRunConfig:
    def test_defaults_cover_modules(self):
        cfg = RunConfig()
        assert cfg["encoder"]["d"] == 16 and cfg["encoder"]["split"] == (1, 1, 2)
        assert cfg["loss"]["energy"] == 3.0 and cfg["train"]["lr_mask"] == 1e-4
        assert cfg["sensor"]["adc_bits"] == 16 and cfg["finetune"]["lr"] == 1e-5

    def test_file_then_override(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nencoder.d = 8\n\ntrain.lr_mask = 1e-3  # inline\n")
        cfg = RunConfig.load(p, ["encoder.d=32"])
        assert cfg["encoder"]["d"] == 32 and cfg["train"]["lr_mask"] == 1e-3

    def test_typed_parsing(self):
        cfg = RunConfig.load(None, ["fsi.budgets=3, 9", "train.energy_normalized=true", "train.lion_betas=0.8,0.9"])
        assert cfg["fsi"]["budgets"] == (3, 9)
        assert cfg["train"]["energy_normalized"] is True
        assert cfg.train().lion_betas == (0.8, 0.9)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            RunConfig.load(None, ["encoder.depth=3"])

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            RunConfig.load(None, ["nope.d=3"])

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            RunConfig.load(None, ["encoder.d=many"])

    def test_bad_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("encoder.d 8\n")
        with pytest.raises(ConfigError, match=":1"):
            RunConfig.load(p)

    def test_invalid_combination(self):
        with pytest.raises(ConfigError):
            RunConfig.load(None, ["encoder.split=1,1,1"]).encoder()

    def test_dump_round_trip(self):
        cfg = RunConfig.load(None, ["encoder.d=8", "sensor.gain=1.3", "data.dir=/x/y"])
        again = RunConfig()
        again.apply_text(cfg.dumps())
        assert again.values == cfg.values

    def test_shared_levels(self):
        cfg = RunConfig.load(None, ["encoder.levels=3", "encoder.split=1,1,1", "decoder.gen_widths=8,8,8",
                                    "decoder.inv_widths=8,8,8"])
        assert cfg.decoder().levels == 3 and cfg.decoder().size == 16
