"""Configuration management."""

import logging
from pathlib import Path
from typing import Optional, Union

import toml
from pydantic import BaseModel, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ptychomix.exceptions import ConfigurationError
from ptychomix.loss import LossKind, RegularizerWeights
from ptychomix.noise import NoiseConfig
from ptychomix.scene import SceneConfig
from ptychomix.solver import (
    InitialObject,
    OptimizerSchedule,
    ReconstructionConfig,
    ReconstructionMode,
)
from ptychomix.sweep import SweepSpec

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ReconstructionSection(BaseModel):
    """Reconstruction configuration."""
    mode: ReconstructionMode = ReconstructionMode.OBJECT_ONLY
    initial_object: InitialObject = InitialObject.UNIFORM_ONE
    probe_radius_m: Optional[float] = None

    @field_validator('probe_radius_m')
    @classmethod
    def validate_probe_radius(cls, v):
        if v is not None and not v > 0:
            raise ValueError('probe_radius_m must be > 0')
        return v


class RuntimeSettings(BaseSettings):
    """Process-level knobs read from PTYCHOMIX_* environment variables."""
    model_config = SettingsConfigDict(env_prefix="PTYCHOMIX_")

    threads: int = 1
    log_level: str = "INFO"

    @field_validator('threads')
    @classmethod
    def validate_threads(cls, v):
        if v < 1:
            raise ValueError('threads must be >= 1')
        return v

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        v = v.upper()
        if v not in LOG_LEVELS:
            raise ValueError(f'log_level must be one of {", ".join(LOG_LEVELS)}')
        return v


class Config:
    """Main configuration class.

    Without a path every section takes its defaults (the desk-scale setup).
    """

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        self.config_path = Path(config_path) if config_path else None
        self._load()

    def _load(self):
        """Load configuration from TOML file."""
        config_data = {}
        if self.config_path is not None:
            if not self.config_path.exists():
                raise FileNotFoundError(f"Config file not found: {self.config_path}")
            with open(self.config_path, 'r') as f:
                config_data = toml.load(f)

        try:
            self.scene = SceneConfig(**config_data.get('scene', {}))
            self.noise = NoiseConfig(**config_data.get('noise', {}))
            self.loss = LossKind(**config_data.get('loss', {}))
            self.regularization = RegularizerWeights(**config_data.get('regularization', {}))
            self.schedule = OptimizerSchedule(**config_data.get('schedule', {}))
            self.reconstruction = ReconstructionSection(**config_data.get('reconstruction', {}))
            self.sweep = SweepSpec(**config_data.get('sweep', {}))
        except ValueError as e:
            raise ConfigurationError(f"Invalid configuration {self.config_path or '(defaults)'}: {e}")

        if self.config_path is not None:
            logger.info(f"Configuration loaded from {self.config_path}")

    def reconstruction_config(self, threads: int = 1) -> ReconstructionConfig:
        """Solver settings assembled from the loss, regularization, schedule and reconstruction sections."""
        return ReconstructionConfig(
            loss=self.loss,
            regs=self.regularization,
            schedule=self.schedule,
            mode=self.reconstruction.mode,
            initial_object=self.reconstruction.initial_object,
            probe_radius_m=self.reconstruction.probe_radius_m,
            threads=threads,
        )

    def to_dict(self) -> dict:
        reconstruction = self.reconstruction.model_dump(mode='json')
        if reconstruction['probe_radius_m'] is None:
            # TOML has no null
            del reconstruction['probe_radius_m']
        return {
            'scene': self.scene.model_dump(mode='json'),
            'noise': self.noise.model_dump(mode='json'),
            'loss': self.loss.model_dump(mode='json'),
            'regularization': self.regularization.model_dump(mode='json'),
            'schedule': self.schedule.model_dump(mode='json'),
            'reconstruction': reconstruction,
            'sweep': self.sweep.model_dump(mode='json'),
        }

    def save(self, path: Optional[Union[str, Path]] = None) -> Path:
        """Save configuration to TOML file."""
        path = Path(path) if path else self.config_path
        if path is None:
            raise ConfigurationError("No path to save the configuration to")
        with open(path, 'w') as f:
            toml.dump(self.to_dict(), f)
        logger.info(f"Configuration saved to {path}")
        return path
