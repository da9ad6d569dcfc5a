import logging
import warnings
from typing import Optional, Tuple, Union

import numpy as np

from models.errors import DelayRangeWarning
from models.models import FrequencyGrid, JptaConfig, QuantizationSpec, SeparatedJptaConfig

log = logging.getLogger(__name__)

AnyConfig = Union[JptaConfig, SeparatedJptaConfig]


def delay_steps(delay: np.ndarray, spec: QuantizationSpec) -> np.ndarray:
    """Índice do ponto mais próximo da grade de atrasos; empates sobem. Fora de faixa é saturado."""
    delay = np.asarray(delay, dtype=float)
    steps = np.floor(delay / spec.tau_step + 0.5).astype(int)
    out_of_range = (delay > spec.tau_max * (1 + 1e-12)) | (delay < 0)
    if np.any(out_of_range):
        worst = float(np.max(np.abs(delay[out_of_range])))
        message = (
            f"{int(out_of_range.sum())} atraso(s) fora de [0, {spec.tau_max * 1e9:.3f}] ns "
            f"(pior {worst * 1e9:.3f} ns); saturando na grade"
        )
        log.warning(message)
        warnings.warn(message, DelayRangeWarning, stacklevel=3)
    return np.clip(steps, 0, spec.n_delay_steps)


def phase_steps(phase: np.ndarray, spec: QuantizationSpec) -> np.ndarray:
    """Índice do ponto de fase mais próximo em distância circular; empates sobem."""
    wrapped = np.mod(np.asarray(phase, dtype=float), 2 * np.pi)
    return np.mod(np.floor(wrapped / spec.phase_step + 0.5).astype(int), spec.phase_levels)


def quantize_arrays(phase: np.ndarray, delay: np.ndarray, spec: QuantizationSpec) -> Tuple[np.ndarray, np.ndarray]:
    return phase_steps(phase, spec) * spec.phase_step, delay_steps(delay, spec) * spec.tau_step


def quantize_preserving_center(
    phase: np.ndarray, delay: np.ndarray, spec: QuantizationSpec, f_c: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Quantiza o atraso e absorve o erro na fase, mantendo φ + 2π·f_c·τ até meio passo de fase."""
    delay = np.asarray(delay, dtype=float)
    delay_q = delay_steps(delay, spec) * spec.tau_step
    residual = np.asarray(phase, dtype=float) + 2 * np.pi * f_c * (delay - delay_q)
    return phase_steps(residual, spec) * spec.phase_step, delay_q


def quantize(config: AnyConfig, spec: QuantizationSpec, grid: Optional[FrequencyGrid] = None) -> AnyConfig:
    """Leva fases e atrasos para as grades de hardware.

    Sem ``grid`` cada valor vai para o ponto mais próximo de forma independente. Com ``grid`` o atraso
    é arredondado primeiro e a fase recebe o erro de atraso na frequência central, preservando x1.
    """
    def rounding(phase, delay):
        if grid is None:
            return quantize_arrays(phase, delay, spec)
        return quantize_preserving_center(phase, delay, spec, grid.f_c)

    if isinstance(config, SeparatedJptaConfig):
        phase_az, delay_az = rounding(config.phase_az, config.delay_az)
        phase_el, delay_el = rounding(config.phase_el, config.delay_el)
        return SeparatedJptaConfig(phase_az=phase_az, delay_az=delay_az, phase_el=phase_el, delay_el=delay_el)
    phase, delay = rounding(config.phase, config.delay)
    return JptaConfig(phase=phase, delay=delay)
