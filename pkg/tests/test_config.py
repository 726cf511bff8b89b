import pytest

from wflmc.experiments.config import ConfigError, ScenarioConfig, config_from_mapping, load_config, parse_overrides


class TestScenarioConfig:
    def test_defaults_valid(self):
        cfg = ScenarioConfig()
        assert cfg.rounds == 51 and cfg.snr_db == 20.0 and cfg.power is None

    @pytest.mark.parametrize("changes", [dict(eta=0.1), dict(power=5.0), dict(reps=0), dict(model="svm"),
                                         dict(axis="gain"), dict(policies=("best",)), dict(m=3)])
    def test_invalid(self, changes):
        import dataclasses
        with pytest.raises(ConfigError):
            dataclasses.replace(ScenarioConfig(), **changes)

    def test_replace_switches_form(self):
        cfg = ScenarioConfig().replace(power=7.0, eta=1e-4)
        assert cfg.snr_db is None and cfg.eta_frac is None

    def test_at_burn_in_keeps_total(self):
        cfg = ScenarioConfig(burn_in=50, samples=50, axis="burn_in")
        p = cfg.at(20)
        assert (p.burn_in, p.samples) == (20, 80)
        with pytest.raises(ConfigError):
            cfg.at(100)

    def test_at_snr(self):
        assert ScenarioConfig(axis="snr_db").at(30).snr_db == 30.0


class TestParsing:
    def test_ini(self, tmp_path):
        p = tmp_path / "s.ini"
        p.write_text("[channel]\nkind = rayleigh\nsnr_db = 30\n[sweep]\naxis = snr_db\nvalues = 0, 10, 20\n"
                     "[sampler]\nsamples = 5\ntight = yes\npolicies = optimized, equal\n")
        cfg = load_config(p)
        assert cfg.channel == "rayleigh" and cfg.values == (0.0, 10.0, 20.0) and cfg.samples == 5
        assert cfg.tight and cfg.policies == ("optimized", "equal")

    def test_duplicate_key(self, tmp_path):
        p = tmp_path / "s.ini"
        p.write_text("[a]\nK = 3\n[b]\nK = 4\n")
        with pytest.raises(ConfigError, match="twice"):
            load_config(p)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"colour": "red"})

    def test_bad_number(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"K": "many"})

    def test_overrides(self):
        assert parse_overrides(["K=3", "values=1,2"]) == {"K": "3", "values": "1,2"}
        with pytest.raises(ConfigError):
            parse_overrides(["K3"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.ini")
