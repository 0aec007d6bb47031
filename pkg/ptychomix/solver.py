"""Gradient-based maximum-likelihood reconstruction.

Each epoch evaluates every scan position (full batch), accumulates the object
(and, in joint mode, probe) gradients, adds the regularizer gradients and takes
one ADAM step. The learning rate then decays as lr <- lr * exp(-decay).
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from ptychomix.dataset import DiffractionDataset
from ptychomix.exceptions import ConfigurationError, DimensionError, DivergenceError
from ptychomix.field import ComplexField, centered_disc
from ptychomix.forward import backward_pass, forward_pass
from ptychomix.io import json_number
from ptychomix.loss import (
    DOMINANCE_THRESHOLD,
    LossKind,
    LossVariant,
    RegularizerWeights,
    evaluate_loss,
    fidelity_dominance_ratio,
    reg_object_amplitude,
    reg_object_fourier,
    reg_probe_support,
)
from ptychomix.propagation import build_propagator

logger = logging.getLogger(__name__)

LEAKAGE_LIMIT = 0.05


class OptimizerSchedule(BaseModel):
    """ADAM constants and the exponential learning-rate schedule."""
    model_config = ConfigDict(frozen=True)

    lr0: float = 0.1
    decay: float = 0.03
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    # mixed-loss gradient only; inf keeps it exact everywhere
    gradient_clip_sigma: float = 5.0

    @field_validator('lr0', 'eps_adam', 'gradient_clip_sigma')
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError('must be > 0')
        return v

    @field_validator('decay', 'epochs')
    @classmethod
    def validate_non_negative(cls, v):
        if v < 0:
            raise ValueError('must be >= 0')
        return v

    @field_validator('beta1', 'beta2')
    @classmethod
    def validate_beta(cls, v):
        if not 0 <= v < 1:
            raise ValueError('ADAM betas must lie in [0, 1)')
        return v

    def learning_rates(self) -> List[float]:
        """lr_0 .. lr_{epochs-1}, each the previous one times exp(-decay)."""
        factor = math.exp(-self.decay)
        rates = []
        lr = self.lr0
        for _ in range(self.epochs):
            rates.append(lr)
            lr *= factor
        return rates


class ReconstructionMode(str, Enum):
    OBJECT_ONLY = "object_only"
    JOINT = "joint_probe_object"


class InitialObject(str, Enum):
    UNIFORM_ONE = "uniform_one"
    SUPPLIED = "supplied"


class ReconstructionConfig(BaseModel):
    """Everything the solver needs apart from the data and the arrays."""
    model_config = ConfigDict(frozen=True)

    loss: LossKind = LossKind()
    regs: RegularizerWeights = RegularizerWeights()
    schedule: OptimizerSchedule = OptimizerSchedule()
    mode: ReconstructionMode = ReconstructionMode.OBJECT_ONLY
    initial_object: InitialObject = InitialObject.UNIFORM_ONE
    probe_radius_m: Optional[float] = None
    threads: int = 1

    @field_validator('threads')
    @classmethod
    def validate_threads(cls, v):
        if v < 1:
            raise ValueError('threads must be >= 1')
        return v

    @property
    def nominal_probe_radius(self) -> float:
        if self.probe_radius_m is not None:
            return self.probe_radius_m
        return self.regs.support_radius_m / 2.0


@dataclass
class AdamState:
    """Moments over the real/imaginary pairs of a parameter array."""
    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        real = _as_real(params)
        return cls(0, np.zeros_like(real), np.zeros_like(real))


def _as_real(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a):
        return np.ascontiguousarray(a, dtype=np.complex128).view(np.float64)
    return np.asarray(a, dtype=np.float64)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update; complex parameters update Re and Im independently."""
    p = _as_real(params)
    g = _as_real(grads)
    if p.shape != g.shape or state.m.shape != p.shape:
        raise DimensionError(
            f"ADAM shapes disagree: params {p.shape}, grads {g.shape}, state {state.m.shape}"
        )
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    updated = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    if np.iscomplexobj(params):
        updated = updated.view(np.complex128).reshape(np.shape(params))
    return updated, AdamState(t, m, v)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    fidelity: float
    regularizers: Dict[str, float]
    dominance_ratio: float
    flagged: bool

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "fidelity": json_number(self.fidelity),
            "regularizers": {k: json_number(v) for k, v in self.regularizers.items()},
            "dominance_ratio": json_number(self.dominance_ratio),
            "flagged": self.flagged,
        }


@dataclass
class ReconstructionReport:
    obj: ComplexField
    probe: ComplexField
    config: ReconstructionConfig
    epochs: List[EpochRecord] = field(default_factory=list)
    final_fidelity: float = math.nan
    wall_time_s: float = 0.0

    @property
    def learning_rates(self) -> List[float]:
        return [r.lr for r in self.epochs]

    @property
    def flagged_epochs(self) -> List[int]:
        return [r.epoch for r in self.epochs if r.flagged]

    def to_dict(self) -> dict:
        return {
            "loss": self.config.loss.model_dump(mode="json"),
            "regularization": self.config.regs.model_dump(mode="json"),
            "schedule": self.config.schedule.model_dump(mode="json"),
            "mode": self.config.mode.value,
            "initial_object": self.config.initial_object.value,
            "final_fidelity": json_number(self.final_fidelity),
            "flagged_epochs": self.flagged_epochs,
            "wall_time_s": self.wall_time_s,
            "epochs": [r.to_dict() for r in self.epochs],
        }


class ProbeCalibration(NamedTuple):
    probe: ComplexField
    report: ReconstructionReport
    leakage: float


def initial_disc_probe(shape, pitch: float, radius: float, energy: float) -> ComplexField:
    """Centered flat-phase disc carrying `energy` photons."""
    mask = centered_disc(shape[0], shape[1], pitch, radius)
    count = int(mask.sum())
    if count == 0:
        raise ConfigurationError(f"Nominal probe radius {radius} m covers no pixel")
    amplitude = math.sqrt(max(energy, 0.0) / count)
    return ComplexField(mask * amplitude, pitch)


def support_leakage(probe: ComplexField, radius: float) -> float:
    """Fraction of probe energy outside the centered support disc."""
    intensity = np.abs(probe.data) ** 2
    total = intensity.sum()
    if total == 0:
        return 0.0
    inside = centered_disc(probe.height, probe.width, probe.pitch, radius)
    return float(intensity[~inside].sum() / total)


class _Problem:
    """Per-run constants shared by the epoch evaluations."""

    def __init__(self, dataset: DiffractionDataset, config: ReconstructionConfig):
        self.kind = config.loss
        self.frames = dataset.frames
        self.offsets = dataset.offsets
        self.variance = dataset.variance
        clip = config.schedule.gradient_clip_sigma
        self.clip_sigma = None if math.isinf(clip) else clip
        self.propagator = build_propagator(dataset.spec)
        self.object_shape = dataset.object_shape
        self.probe_shape = dataset.spec.shape

    def position_terms(self, k: int, obj: np.ndarray, probe: np.ndarray, with_probe: bool):
        fp = forward_pass(obj, probe, self.offsets[k], self.propagator)
        result = evaluate_loss(self.kind, self.frames[k], fp.intensity, self.variance,
                               clip_sigma=self.clip_sigma)
        g_obj, g_probe = backward_pass(fp, probe, result.grad, self.propagator)
        return result.value, g_obj, g_probe if with_probe else None

    def evaluate(self, obj: np.ndarray, probe: np.ndarray, with_probe: bool,
                 pool: Optional[ThreadPoolExecutor]):
        """Fidelity and summed Wirtinger gradients; reduced in position order."""
        indices = range(len(self.offsets))
        if pool is None:
            results = [self.position_terms(k, obj, probe, with_probe) for k in indices]
        else:
            results = list(pool.map(lambda k: self.position_terms(k, obj, probe, with_probe),
                                    indices))
        fidelity = 0.0
        g_obj = np.zeros(self.object_shape, dtype=np.complex128)
        g_probe = np.zeros(self.probe_shape, dtype=np.complex128) if with_probe else None
        h, w = self.probe_shape
        for (value, patch_grad, probe_grad), (r, c) in zip(results, self.offsets):
            fidelity += value
            g_obj[r:r + h, c:c + w] += patch_grad
            if with_probe:
                g_probe += probe_grad
        return fidelity, g_obj, g_probe


def _check_inputs(dataset: DiffractionDataset, config: ReconstructionConfig,
                  probe: Optional[ComplexField], initial_object: Optional[ComplexField]):
    if config.loss.variant == LossVariant.MIXED and dataset.variance is None:
        raise ConfigurationError(
            "The mixed loss requires a readout variance map (variance.pga1) but the dataset has none"
        )
    if probe is None and config.mode == ReconstructionMode.OBJECT_ONLY:
        raise ConfigurationError("object_only mode requires a supplied probe")
    if probe is not None and probe.shape != dataset.spec.shape:
        raise DimensionError(
            f"Probe shape {probe.shape} does not match frame shape {dataset.spec.shape}"
        )
    if config.initial_object == InitialObject.SUPPLIED:
        if initial_object is None:
            raise ConfigurationError("initial_object = supplied but no object was given")
        if initial_object.shape != dataset.object_shape:
            raise DimensionError(
                f"Initial object shape {initial_object.shape} does not match {dataset.object_shape}"
            )
    elif initial_object is not None:
        raise ConfigurationError(
            "An initial object was given but initial_object = uniform_one; "
            "set initial_object = supplied to start from it"
        )


def reconstruct(dataset: DiffractionDataset, config: ReconstructionConfig,
                probe: Optional[ComplexField] = None,
                initial_object: Optional[ComplexField] = None) -> ReconstructionReport:
    """Minimize fidelity + regularizers over the object (and probe in joint mode)."""
    _check_inputs(dataset, config, probe, initial_object)
    pitch = dataset.spec.pitch_m
    schedule = config.schedule
    regs = config.regs
    joint = config.mode == ReconstructionMode.JOINT

    if probe is None:
        energy = float(np.mean(dataset.frames.sum(axis=(1, 2))))
        probe = initial_disc_probe(dataset.spec.shape, pitch, config.nominal_probe_radius, energy)
    if config.initial_object == InitialObject.SUPPLIED:
        obj = np.array(initial_object.data, dtype=np.complex128)
    else:
        obj = np.ones(dataset.object_shape, dtype=np.complex128)
    probe_arr = np.array(probe.data, dtype=np.complex128)
    # Probe steps are taken in units of its peak amplitude.
    probe_scale = float(np.abs(probe_arr).max()) or 1.0

    problem = _Problem(dataset, config)
    obj_state = AdamState.zeros_like(obj)
    probe_state = AdamState.zeros_like(probe_arr)
    records: List[EpochRecord] = []
    lr = schedule.lr0
    decay = math.exp(-schedule.decay)
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None

    logger.info(
        f"Reconstructing {dataset.n_positions} positions, loss={config.loss.variant.value}"
        f"{' (zero-cropped)' if config.loss.crops_measurement else ''}, mode={config.mode.value}, "
        f"epochs={schedule.epochs}"
    )
    start = time.perf_counter()
    try:
        for epoch in range(schedule.epochs):
            fidelity, g_obj, g_probe = problem.evaluate(obj, probe_arr, joint, pool)
            grad_obj = 2.0 * g_obj
            reg_values: Dict[str, float] = {}
            if regs.beta > 0:
                term = reg_object_amplitude(obj, regs.beta, regs.l1_epsilon)
                reg_values["object_amplitude"] = term.value
                grad_obj += term.grad
            if regs.gamma > 0:
                term = reg_object_fourier(obj, regs.gamma, regs.l1_epsilon)
                reg_values["object_fourier"] = term.value
                grad_obj += term.grad
            grad_probe = None
            if joint:
                grad_probe = 2.0 * g_probe
                if regs.alpha > 0:
                    term = reg_probe_support(probe_arr, regs.support_radius_m, regs.alpha,
                                             pitch, regs.l1_epsilon)
                    reg_values["probe_support"] = term.value
                    grad_probe += term.grad

            total = fidelity + sum(reg_values.values())
            finite = math.isfinite(total) and np.all(np.isfinite(grad_obj))
            if grad_probe is not None:
                finite = finite and np.all(np.isfinite(grad_probe))
            if not finite:
                raise DivergenceError(epoch, lr, total)

            ratio = fidelity_dominance_ratio(fidelity, reg_values.values())
            flagged = ratio < DOMINANCE_THRESHOLD
            if flagged and not any(r.flagged for r in records):
                logger.warning(
                    f"Data term does not dominate the regularizers at epoch {epoch}: "
                    f"fidelity/regularizer ratio {ratio:.3g} < {DOMINANCE_THRESHOLD:g}"
                )
            records.append(EpochRecord(epoch, lr, fidelity, reg_values, ratio, flagged))
            logger.debug(f"epoch {epoch}: lr={lr:.5g} fidelity={fidelity:.6g} ratio={ratio:.4g}")

            obj, obj_state = adam_step(obj, grad_obj, obj_state, lr,
                                       schedule.beta1, schedule.beta2, schedule.eps_adam)
            if joint:
                probe_arr, probe_state = adam_step(probe_arr, grad_probe, probe_state,
                                                   lr * probe_scale, schedule.beta1,
                                                   schedule.beta2, schedule.eps_adam)
            lr *= decay

        final_fidelity, _, _ = problem.evaluate(obj, probe_arr, False, pool)
    finally:
        if pool is not None:
            pool.shutdown()

    if not math.isfinite(final_fidelity):
        raise DivergenceError(schedule.epochs, lr, final_fidelity)

    wall = time.perf_counter() - start
    flagged_count = sum(r.flagged for r in records)
    if flagged_count:
        logger.warning(f"{flagged_count} of {len(records)} epochs had a dominance ratio below "
                       f"{DOMINANCE_THRESHOLD:g}")
    logger.info(f"Reconstruction finished: fidelity {final_fidelity:.6g}, {wall:.2f} s")
    return ReconstructionReport(
        obj=ComplexField(obj, pitch),
        probe=ComplexField(probe_arr, pitch),
        config=config,
        epochs=records,
        final_fidelity=final_fidelity,
        wall_time_s=wall,
    )


def run_probe_calibration(dataset: DiffractionDataset, config: ReconstructionConfig,
                          initial_probe: Optional[ComplexField] = None) -> ProbeCalibration:
    """Joint object/probe reconstruction on a high-SNR dataset."""
    if config.mode != ReconstructionMode.JOINT:
        raise ConfigurationError("Probe calibration requires mode = joint_probe_object")
    if config.regs.alpha == 0:
        logger.warning("Probe calibration without the support regularizer (alpha = 0)")
    report = reconstruct(dataset, config, probe=initial_probe)
    leakage = support_leakage(report.probe, config.regs.support_radius_m)
    if leakage > LEAKAGE_LIMIT:
        logger.warning(
            f"{leakage:.1%} of the calibrated probe energy lies outside the "
            f"{config.regs.support_radius_m:g} m support"
        )
    else:
        logger.info(f"Calibrated probe: {leakage:.2%} of energy outside the support")
    return ProbeCalibration(report.probe, report, leakage)


def calibrate_probe(dataset: DiffractionDataset, config: ReconstructionConfig,
                    initial_probe: Optional[ComplexField] = None) -> ComplexField:
    """Recover the illumination field from a high-SNR calibration dataset."""
    return run_probe_calibration(dataset, config, initial_probe).probe
