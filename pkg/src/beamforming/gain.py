"""Ganho de beamforming do arranjo JPTA.

G(m, dir) = (1 / N) * |sum_{y,z} exp(j*(phi + 2*pi*f_m*tau) - j*Omega)|^2, com N = n_az * n_el,
de modo que o ganho máximo vale N. Omega usa sempre a razão exata f_m / f_c.
"""
import logging
import math
import warnings
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.errors import DelayRangeWarning, InvalidInputError
from models.models import (
    ArrayGeometry,
    Direction,
    FrequencyGrid,
    JptaConfig,
    MetricsReport,
    SeparatedJptaConfig,
    UserScenario,
)

log = logging.getLogger(__name__)

AnyConfig = Union[JptaConfig, SeparatedJptaConfig]


def to_db(linear) -> np.ndarray:
    return 10.0 * np.log10(linear)


def _check_shape(geometry: ArrayGeometry, config: AnyConfig) -> None:
    if config.shape != geometry.shape:
        raise InvalidInputError(
            f"Configuração com dimensões {config.shape} não confere com o arranjo {geometry.shape}"
        )


def _check_subcarrier(grid: FrequencyGrid, m: int) -> None:
    if not 0 <= m < grid.m_count:
        raise InvalidInputError(f"Subportadora {m} fora de [0, {grid.M}]")


def _subcarrier_indices(grid: FrequencyGrid, subcarriers: Optional[Iterable[int]]) -> np.ndarray:
    if subcarriers is None:
        return np.arange(grid.m_count)
    idx = np.asarray(list(subcarriers) if not isinstance(subcarriers, np.ndarray) else subcarriers, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= grid.m_count):
        raise InvalidInputError(f"Subportadoras fora de [0, {grid.M}]")
    return idx


def expand(config: SeparatedJptaConfig) -> JptaConfig:
    """Expande a configuração por eixo para a matriz completa (fases reduzidas a [0, 2pi))."""
    phase = np.mod(config.phase_az[:, None] + config.phase_el[None, :], 2 * np.pi)
    delay = config.delay_az[:, None] + config.delay_el[None, :]
    return JptaConfig(phase=phase, delay=delay)


def as_joint(config: AnyConfig) -> JptaConfig:
    return expand(config) if isinstance(config, SeparatedJptaConfig) else config


def steering_phase(
    geometry: ArrayGeometry, grid: FrequencyGrid, direction: Direction, m: int, y: int, z: int
) -> float:
    """Omega(y, z, f_m) = pi * (f_m / f_c) * (y * sin(az) * sin(el) + z * cos(el))."""
    if not (0 <= y < geometry.n_az and 0 <= z < geometry.n_el):
        raise InvalidInputError(f"Elemento ({y}, {z}) fora do arranjo {geometry.shape}")
    _check_subcarrier(grid, m)
    ratio = grid.frequency(m) / grid.f_c
    return math.pi * ratio * (y * direction.u + z * direction.v)


def steering_phases(geometry: ArrayGeometry, ratios: np.ndarray, direction: Direction) -> np.ndarray:
    """Omega para várias subportadoras: array (K, n_az, n_el)."""
    y = np.arange(geometry.n_az)[:, None]
    z = np.arange(geometry.n_el)[None, :]
    spatial = np.pi * (y * direction.u + z * direction.v)
    return np.asarray(ratios)[:, None, None] * spatial[None, :, :]


def combiner_phases(config: JptaConfig, frequencies: np.ndarray) -> np.ndarray:
    """h = phi + 2*pi*f_m*tau para cada subportadora: array (K, n_az, n_el)."""
    return config.phase[None, :, :] + 2 * np.pi * np.asarray(frequencies)[:, None, None] * config.delay[None, :, :]


def _axis_gains(
    phase: np.ndarray, delay: np.ndarray, frequencies: np.ndarray, ratios: np.ndarray, spatial: float
) -> np.ndarray:
    n = np.arange(phase.size)
    exponent = (
        phase[None, :]
        + 2 * np.pi * frequencies[:, None] * delay[None, :]
        - np.pi * ratios[:, None] * n[None, :] * spatial
    )
    return np.abs(np.exp(1j * exponent).sum(axis=1)) ** 2 / phase.size


def subcarrier_gains(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    config: AnyConfig,
    direction: Direction,
    subcarriers: Optional[Iterable[int]] = None,
) -> np.ndarray:
    """Ganho linear em cada subportadora pedida (todas por padrão)."""
    _check_shape(geometry, config)
    idx = _subcarrier_indices(grid, subcarriers)
    frequencies = grid.frequencies[idx]
    ratios = grid.ratios[idx]
    if isinstance(config, SeparatedJptaConfig):
        g_az = _axis_gains(config.phase_az, config.delay_az, frequencies, ratios, direction.u)
        g_el = _axis_gains(config.phase_el, config.delay_el, frequencies, ratios, direction.v)
        return g_az * g_el
    exponent = combiner_phases(config, frequencies) - steering_phases(geometry, ratios, direction)
    total = np.exp(1j * exponent).sum(axis=(1, 2))
    return np.abs(total) ** 2 / geometry.n_elements


def gain(
    geometry: ArrayGeometry, grid: FrequencyGrid, config: JptaConfig, direction: Direction, m: int
) -> float:
    if not isinstance(config, JptaConfig):
        raise InvalidInputError("gain espera JptaConfig; use gain_separated para configurações por eixo")
    _check_subcarrier(grid, m)
    return float(subcarrier_gains(geometry, grid, config, direction, [m])[0])


def gain_separated(
    geometry: ArrayGeometry, grid: FrequencyGrid, config: SeparatedJptaConfig, direction: Direction, m: int
) -> float:
    """G_az * G_el, calculado a partir das duas somas unidimensionais."""
    if not isinstance(config, SeparatedJptaConfig):
        raise InvalidInputError("gain_separated espera SeparatedJptaConfig")
    _check_subcarrier(grid, m)
    return float(subcarrier_gains(geometry, grid, config, direction, [m])[0])


def user_mean_gain(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    config: AnyConfig,
    direction: Direction,
    subband: Iterable[int],
) -> float:
    idx = _subcarrier_indices(grid, subband)
    if idx.size == 0:
        raise InvalidInputError("Subbanda vazia")
    return float(subcarrier_gains(geometry, grid, config, direction, idx).mean())


def log_mean_gain(mean_gains: Sequence[float]) -> float:
    """G_l = sum_i 10*log10(G_mean,i), em dB."""
    values = np.asarray(mean_gains, dtype=float)
    if values.size == 0:
        raise InvalidInputError("Nenhum ganho médio fornecido")
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise InvalidInputError(f"Ganhos médios devem ser > 0 (feixe colapsado?): {values.tolist()}")
    return float(np.sum(10.0 * np.log10(values)))


def scenario_mean_gains(
    geometry: ArrayGeometry, grid: FrequencyGrid, scenario: UserScenario, config: AnyConfig
) -> List[float]:
    return [
        user_mean_gain(geometry, grid, config, direction, scenario.subcarriers(i))
        for i, direction in enumerate(scenario.directions)
    ]


def evaluate(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    scenario: UserScenario,
    config: AnyConfig,
    solver_name: str = "",
    wall_time: float = 0.0,
) -> MetricsReport:
    mean_gains = scenario_mean_gains(geometry, grid, scenario, config)
    return MetricsReport(
        per_user_mean_gain=tuple(mean_gains),
        log_mean_gain=log_mean_gain(mean_gains),
        solver_name=solver_name,
        wall_time=wall_time,
    )


def fairness_spread_db(report: MetricsReport) -> float:
    return report.spread_db


def _map_subcarriers(grid: FrequencyGrid, subcarriers: Optional[Iterable[int]]) -> np.ndarray:
    return _subcarrier_indices(grid, subcarriers)


def gain_map(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    config: AnyConfig,
    az_grid: Sequence[float],
    el_grid: Sequence[float],
    reduction: str = "max",
    subcarriers: Optional[Iterable[int]] = None,
) -> np.ndarray:
    """Ganho linear sobre uma grade de ângulos (graus).

    reduction="max": máximo entre subportadoras, shape (|az|, |el|).
    reduction="per-subcarrier": shape (|az|, |el|, K).
    """
    if reduction not in ("max", "per-subcarrier"):
        raise InvalidInputError(f"Redução desconhecida: {reduction}")
    az = np.asarray(az_grid, dtype=float)
    el = np.asarray(el_grid, dtype=float)
    if az.size == 0 or el.size == 0:
        raise InvalidInputError("Grades de ângulos não podem ser vazias")
    joint = as_joint(config)
    _check_shape(geometry, joint)

    idx = _map_subcarriers(grid, subcarriers)
    frequencies = grid.frequencies[idx]
    ratios = grid.ratios[idx]
    weights = np.exp(1j * combiner_phases(joint, frequencies))
    y = np.arange(geometry.n_az)
    z = np.arange(geometry.n_el)
    az_rad = np.radians(az)

    out_shape = (az.size, el.size) if reduction == "max" else (az.size, el.size, idx.size)
    result = np.empty(out_shape)
    for j, theta_el in enumerate(np.radians(el)):
        # Soma no eixo z primeiro; depende só da elevação.
        el_phasor = np.exp(-1j * np.pi * ratios[:, None] * z[None, :] * math.cos(theta_el))
        row_sums = np.einsum("myz,mz->my", weights, el_phasor)
        u = np.sin(az_rad) * math.sin(theta_el)
        az_phasor = np.exp(-1j * np.pi * ratios[:, None, None] * y[None, :, None] * u[None, None, :])
        totals = np.einsum("my,mya->ma", row_sums, az_phasor)
        gains = np.abs(totals) ** 2 / geometry.n_elements
        if reduction == "max":
            result[:, j] = gains.max(axis=0)
        else:
            result[:, j, :] = gains.T
    return result


def frequency_slice(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    config: AnyConfig,
    az_grid: Sequence[float],
    theta_el: float,
) -> np.ndarray:
    """Ganho azimute x subportadora numa elevação fixa, shape (|az|, m_count)."""
    return gain_map(geometry, grid, config, az_grid, [theta_el], reduction="per-subcarrier")[:, 0, :]


def _local_maxima(values: np.ndarray) -> np.ndarray:
    padded = np.pad(values, 1, mode="constant", constant_values=-np.inf)
    center = padded[1:-1, 1:-1]
    is_max = np.ones(values.shape, dtype=bool)
    rows, cols = values.shape
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            neighbour = padded[1 + dy:1 + dy + rows, 1 + dx:1 + dx + cols]
            is_max &= center >= neighbour
    return is_max


def find_peaks(map_db: np.ndarray, k: int) -> List[Tuple[int, int]]:
    """Índices (i_az, i_el) dos k maiores máximos locais do mapa."""
    values = np.asarray(map_db, dtype=float)
    candidates = np.argwhere(_local_maxima(values))
    order = np.argsort(-values[candidates[:, 0], candidates[:, 1]], kind="stable")
    return [tuple(int(v) for v in candidates[i]) for i in order[:k]]


def count_sidelobes(map_db: np.ndarray, threshold_db: float = 10.0, n_main: int = 0) -> int:
    """Máximos locais acima de (pico - threshold_db), descontados `n_main` lóbulos principais."""
    values = np.asarray(map_db, dtype=float)
    level = values.max() - threshold_db
    lobes = int(np.count_nonzero(_local_maxima(values) & (values > level)))
    return max(lobes - n_main, 0)


def _warn_span(span: float, tau_max: Optional[float]) -> None:
    if tau_max is not None and span > tau_max * (1 + 1e-12):
        message = f"Excursão de atraso {span * 1e9:.3f} ns excede tau_max {tau_max * 1e9:.3f} ns"
        log.warning(message)
        warnings.warn(message, DelayRangeWarning, stacklevel=3)


def normalize_delays(config: AnyConfig, grid: FrequencyGrid, tau_max: Optional[float] = None) -> AnyConfig:
    """Desloca os atrasos para mínimo zero preservando x1 = phi + 2*pi*f_c*tau.

    Um atraso comum só gira todos os termos pelo mesmo ângulo, então o ganho não muda.
    """
    two_pi_fc = 2 * np.pi * grid.f_c
    if isinstance(config, SeparatedJptaConfig):
        shift_az = config.delay_az.min()
        shift_el = config.delay_el.min()
        delay_az = config.delay_az - shift_az
        delay_el = config.delay_el - shift_el
        _warn_span(float(delay_az.max() + delay_el.max()), tau_max)
        return SeparatedJptaConfig(
            phase_az=np.mod(config.phase_az + two_pi_fc * shift_az, 2 * np.pi),
            delay_az=delay_az,
            phase_el=np.mod(config.phase_el + two_pi_fc * shift_el, 2 * np.pi),
            delay_el=delay_el,
        )
    shift = config.delay.min()
    delay = config.delay - shift
    _warn_span(float(delay.max()), tau_max)
    return JptaConfig(phase=np.mod(config.phase + two_pi_fc * shift, 2 * np.pi), delay=delay)
