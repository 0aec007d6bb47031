import pytest
import toml

from ptychomix.config import Config, RuntimeSettings
from ptychomix.exceptions import ConfigurationError
from ptychomix.loss import LossVariant
from ptychomix.solver import ReconstructionMode
from ptychomix.sweep import SweepVariant


def test_defaults_without_file():
    config = Config()
    assert config.scene.object_px == 128
    assert config.scene.probe_px == 64
    assert config.noise.sigma_counts == 1.5
    assert config.regularization.alpha == 100.0
    assert config.schedule.lr0 == 0.1
    assert config.schedule.decay == 0.03
    assert config.sweep.variants == list(SweepVariant)


def test_sections_are_loaded(small_config_path):
    config = Config(small_config_path)
    assert config.scene.object_px == 48
    assert config.noise.dark_frames == 20
    assert config.schedule.epochs == 3
    assert config.sweep.photon_budgets == [1e4, 1e6]
    assert config.sweep.variants == [SweepVariant.POISSON_CROP, SweepVariant.MIXED_RAW]


def test_reconstruction_config_assembly(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        '[loss]\nvariant = "mixed"\nzero_crop = true\n'
        '[reconstruction]\nmode = "joint_probe_object"\n'
    )
    recon = Config(path).reconstruction_config(threads=4)
    assert recon.loss.variant == LossVariant.MIXED
    assert recon.loss.crops_measurement
    assert recon.mode == ReconstructionMode.JOINT
    assert recon.threads == 4


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        Config("/nonexistent/ptychomix.toml")


@pytest.mark.parametrize("section", [
    '[scene]\nwavelength_m = -1.0\n',
    '[noise]\ndark_frames = 1\n',
    '[sweep]\nphoton_budgets = [1e6, 1e3]\n',
    '[loss]\nvariant = "laplace"\n',
    '[reconstruction]\nprobe_radius_m = -1.0\n',
    '[reconstruction]\nprobe_radius_m = 0.0\n',
    '[schedule]\ngradient_clip_sigma = 0.0\n',
])
def test_invalid_values(tmp_path, section):
    path = tmp_path / "bad.toml"
    path.write_text(section)
    with pytest.raises(ConfigurationError):
        Config(path)


def test_save_round_trip(tmp_path, small_config_path):
    config = Config(small_config_path)
    saved = config.save(tmp_path / "saved.toml")
    again = Config(saved)
    assert again.to_dict() == config.to_dict()
    assert set(toml.load(saved)) == {'scene', 'noise', 'loss', 'regularization', 'schedule',
                                     'reconstruction', 'sweep'}


def test_runtime_settings_from_environment(monkeypatch):
    monkeypatch.setenv("PTYCHOMIX_THREADS", "6")
    monkeypatch.setenv("PTYCHOMIX_LOG_LEVEL", "debug")
    settings = RuntimeSettings()
    assert settings.threads == 6
    assert settings.log_level == "DEBUG"
    assert RuntimeSettings(threads=2).threads == 2
