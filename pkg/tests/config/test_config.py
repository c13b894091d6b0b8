"""
Settings Tests
"""

import pytest
import yaml

from app.config.config import Settings, get_settings, load_settings
from app.core.exceptions import ConfigError
from app.schemas.dynamics_schemas import RateModel
from app.schemas.run_schemas import DynamicsOverrides, RunConfig


@pytest.mark.unit
class TestSettings:
    """Test defaults, presets and the YAML loader."""

    def test_packaged_presets(self, settings: Settings):
        assert {"fig3_text", "fig3_caption", "fig3_soak", "fig4", "fig5"} <= set(settings.presets)
        assert settings.figure("fig4").ensemble == 32
        assert settings.figure("fig3").presets == ["fig3_text", "fig3_caption", "fig3_soak"]
        assert settings.figure("fig3").iv_curves
        assert not settings.figure("fig4").iv_curves

    def test_environment_ignored(self, monkeypatch):
        """Environment variables never change settings."""
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("OUTPUT_DIR", "/elsewhere")

        settings = Settings()

        assert settings.log_level == "INFO"
        assert settings.output_dir == "runs"

    def test_preset_rates_layer_over_base(self):
        """Preset rate fields win; the rest come from the configured rates."""
        settings = Settings(rates=RateModel(dark_spike_rate=0.5, lambda_gap=1.32))

        fig5 = settings.preset("fig5")
        fig3 = settings.preset("fig3_text")

        assert fig5.rates.trap_yield == 0.1
        assert fig5.rates.dark_spike_rate == 0.5
        assert fig5.rates.lambda_gap == 1.32
        assert fig3.rates.dark_spike_rate == 0.01

    def test_unknown_preset(self, settings: Settings):
        with pytest.raises(ConfigError) as exc:
            settings.preset("fig9")

        assert "fig5" in exc.value.message

    def test_unknown_figure(self, settings: Settings):
        with pytest.raises(ConfigError):
            settings.figure("fig9")

    def test_log_level_normalised(self):
        assert Settings(log_level="debug").log_level == "DEBUG"

    def test_extra_keys_rejected(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text("colour: blue\n", encoding="utf-8")

        with pytest.raises(ConfigError):
            load_settings(path)

    def test_load_settings(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text(yaml.safe_dump({"log_level": "warning", "solver": {"dz": 0.05}}), encoding="utf-8")

        settings = load_settings(path)

        assert settings.log_level == "WARNING"
        assert settings.solver.dz == 0.05
        assert settings.solver.mixing == 0.2

    def test_invalid_value_located(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text(yaml.safe_dump({"solver": {"mixing": 2.0}}), encoding="utf-8")

        with pytest.raises(ConfigError) as exc:
            load_settings(path)

        assert "solver.mixing" in exc.value.message

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_settings(tmp_path / "absent.yaml")

    def test_singleton(self):
        assert get_settings() is get_settings()


@pytest.mark.unit
class TestRunConfig:
    def test_randomized_needs_seed(self, tmp_path):
        with pytest.raises(ValueError):
            RunConfig(command="trace", out_dir=tmp_path)

    def test_repro_needs_figure(self, tmp_path):
        with pytest.raises(ValueError):
            RunConfig(command="repro", out_dir=tmp_path, seed=0)

    def test_builtin_device(self, tmp_path):
        config = RunConfig(command="report", out_dir=tmp_path)

        assert config.builtin
        assert config.echo()["out_dir"] == str(tmp_path)

    def test_overrides(self):
        overrides = DynamicsOverrides(duration_s=30.0, V_g=0.1)

        assert overrides.changes() == {"duration_s": 30.0, "V_g": 0.1}

    def test_bad_override(self):
        with pytest.raises(ValueError):
            DynamicsOverrides(duration_s=-1.0)
