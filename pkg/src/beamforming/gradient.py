"""Gradiente analítico de G_l e descida com Adam.

Internamente tudo é escrito nas variáveis do sistema por subbanda: o termo de cada elemento
na subportadora m vale x1 + m' * x2 - Omega_m, com x1 = phi + 2*pi*f_c*tau e
x2 = 2*pi*delta_f*tau. Assim as fases nunca passam por 2*pi*f_c*tau (dezenas de milhares de
radianos) e a descida opera em radianos.
"""
import logging
import math
from typing import Dict, Tuple, Union

import numpy as np
from tqdm import tqdm

from beamforming.gain import expand, normalize_delays
from beamforming.linsys import fit_to_hardware, hardware_to_fit
from beamforming.quantize import quantize
from models.errors import DegenerateConfigurationError, SolverError
from models.models import (
    ArrayGeometry,
    FrequencyGrid,
    JptaConfig,
    OptimizationTrace,
    OptimizerSettings,
    QuantizationSpec,
    SeparatedJptaConfig,
    UserScenario,
)

log = logging.getLogger(__name__)

AnyConfig = Union[JptaConfig, SeparatedJptaConfig]
Params = Dict[str, np.ndarray]


class LogMeanObjective:
    """G_l e suas derivadas parciais em relação a (x1, x2) de cada elemento.

    O steering exp(-j*Omega) fica em cache com shape (M+1, N). A cada avaliação os fatores
    exp(j*m'*x2) saem de um produto acumulado ao longo das subportadoras (m' cresce de 1 em 1).
    """

    def __init__(self, geometry: ArrayGeometry, grid: FrequencyGrid, scenario: UserScenario):
        self.geometry = geometry
        self.grid = grid
        self.scenario = scenario
        users = scenario.row_users()
        row_u = np.array([d.u for d in scenario.directions])[users]
        row_v = np.array([d.v for d in scenario.directions])[users]
        y = np.arange(geometry.n_az)[None, :, None]
        z = np.arange(geometry.n_el)[None, None, :]
        omega = np.pi * grid.ratios[:, None, None] * (y * row_u[:, None, None] + z * row_v[:, None, None])
        self.steer = np.exp(-1j * omega).reshape(grid.m_count, geometry.n_elements)
        self.offsets = grid.offsets
        self.users = users
        self.starts = scenario.block_starts
        self.sizes = np.asarray(scenario.sizes, dtype=float)

    def _terms(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        x2 = x2.ravel()
        terms = np.empty(self.steer.shape, dtype=complex)
        terms[0] = np.exp(1j * self.offsets[0] * x2)
        terms[1:] = np.exp(1j * x2)
        np.cumprod(terms, axis=0, out=terms)
        terms *= self.steer
        terms *= np.exp(1j * x1.ravel())
        return terms

    def value_and_partials(self, x1: np.ndarray, x2: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        """Retorna (G_l, dG_l/dx1, dG_l/dx2), as duas últimas com o shape do arranjo."""
        n = self.geometry.n_elements
        terms = self._terms(x1, x2)
        sums = terms.sum(axis=1)
        gains = np.abs(sums) ** 2 / n
        means = np.add.reduceat(gains, self.starts) / self.sizes
        if not np.all(np.isfinite(means)) or np.any(means <= 0):
            raise DegenerateConfigurationError(f"Ganho médio colapsado: {means.tolist()}")
        objective = float(np.sum(10.0 * np.log10(means)))
        chain = (10.0 / (math.log(10.0) * means * self.sizes * n))[self.users]
        # d|S_m|^2 / d(ângulo do elemento e) = -2 * Im(conj(S_m) * T_me) = -2 * (Re S * Im T - Im S * Re T)
        re_coeffs = np.column_stack([chain * sums.real, chain * self.offsets * sums.real])
        im_coeffs = np.column_stack([chain * sums.imag, chain * self.offsets * sums.imag])
        partials = -2.0 * (terms.imag.T @ re_coeffs - terms.real.T @ im_coeffs)
        shape = self.geometry.shape
        return objective, partials[:, 0].reshape(shape), partials[:, 1].reshape(shape)


def _fit_variables(config: JptaConfig, grid: FrequencyGrid) -> Tuple[np.ndarray, np.ndarray]:
    x1 = config.phase + 2 * np.pi * grid.f_c * config.delay
    x2 = 2 * np.pi * grid.delta_f * config.delay
    return x1, x2


def gl_gradient(
    geometry: ArrayGeometry, grid: FrequencyGrid, scenario: UserScenario, config: JptaConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """(dG_l/dphi, dG_l/dtau) por elemento; tau em segundos."""
    x1, x2 = _fit_variables(config, grid)
    _, d_x1, d_x2 = LogMeanObjective(geometry, grid, scenario).value_and_partials(x1, x2)
    d_phase = d_x1
    d_delay = 2 * np.pi * grid.f_c * d_x1 + 2 * np.pi * grid.delta_f * d_x2
    return d_phase, d_delay


def gl_gradient_separated(
    geometry: ArrayGeometry, grid: FrequencyGrid, scenario: UserScenario, config: SeparatedJptaConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(dphi_az, dtau_az, dphi_el, dtau_el): o gradiente da matriz expandida somado no outro eixo."""
    d_phase, d_delay = gl_gradient(geometry, grid, scenario, expand(config))
    return d_phase.sum(axis=1), d_delay.sum(axis=1), d_phase.sum(axis=0), d_delay.sum(axis=0)


class AdamOptimizer:
    """Adam sobre um dicionário de arrays, minimizando."""

    def __init__(self, learning_rate: float = 0.1, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: Params = {}
        self._v: Params = {}

    @classmethod
    def from_settings(cls, settings: OptimizerSettings) -> "AdamOptimizer":
        return cls(settings.learning_rate, settings.beta1, settings.beta2, settings.eps)

    def step(self, params: Params, grads: Params) -> Params:
        self.t += 1
        updated = {}
        for key, value in params.items():
            g = grads[key]
            m = self.beta1 * self._m.get(key, np.zeros_like(g)) + (1 - self.beta1) * g
            v = self.beta2 * self._v.get(key, np.zeros_like(g)) + (1 - self.beta2) * g * g
            self._m[key], self._v[key] = m, v
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            updated[key] = value - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated


def max_log_mean_gain(geometry: ArrayGeometry, scenario: UserScenario) -> float:
    """G_l,max = N_u * 10*log10(N)."""
    return scenario.n_users * 10.0 * math.log10(geometry.n_elements)


def _initial_params(config: AnyConfig, grid: FrequencyGrid, half_span: float) -> Params:
    if isinstance(config, SeparatedJptaConfig):
        x1_az, x2_az = hardware_to_fit(config.phase_az, config.delay_az, grid)
        x1_el, x2_el = hardware_to_fit(config.phase_el, config.delay_el, grid)
        return {"x1_az": x1_az, "rho_az": x2_az * half_span, "x1_el": x1_el, "rho_el": x2_el * half_span}
    x1, x2 = hardware_to_fit(config.phase, config.delay, grid)
    return {"x1": x1, "rho": x2 * half_span}


def _joint_variables(params: Params, half_span: float) -> Tuple[np.ndarray, np.ndarray]:
    if "x1" in params:
        return params["x1"], params["rho"] / half_span
    x1 = params["x1_az"][:, None] + params["x1_el"][None, :]
    rho = params["rho_az"][:, None] + params["rho_el"][None, :]
    return x1, rho / half_span


def _param_grads(params: Params, d_x1: np.ndarray, d_x2: np.ndarray, half_span: float) -> Params:
    d_rho = d_x2 / half_span
    if "x1" in params:
        return {"x1": d_x1, "rho": d_rho}
    return {
        "x1_az": d_x1.sum(axis=1),
        "rho_az": d_rho.sum(axis=1),
        "x1_el": d_x1.sum(axis=0),
        "rho_el": d_rho.sum(axis=0),
    }


def _to_config(params: Params, grid: FrequencyGrid, half_span: float) -> AnyConfig:
    if "x1" in params:
        phase, delay = fit_to_hardware(params["x1"], params["rho"] / half_span, grid)
        return JptaConfig(phase=phase, delay=delay)
    phase_az, delay_az = fit_to_hardware(params["x1_az"], params["rho_az"] / half_span, grid)
    phase_el, delay_el = fit_to_hardware(params["x1_el"], params["rho_el"] / half_span, grid)
    return SeparatedJptaConfig(phase_az=phase_az, delay_az=delay_az, phase_el=phase_el, delay_el=delay_el)


def gd_optimize(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    scenario: UserScenario,
    init: AnyConfig,
    spec: QuantizationSpec,
    settings: OptimizerSettings,
) -> Tuple[AnyConfig, OptimizationTrace]:
    """Minimiza (G_l,max - G_l)^2 com Adam a partir do init quantizado e quantiza o resultado.

    As variáveis são x1 e rho = x2 * M/2 (fase acumulada na borda da banda), ambas em radianos.
    O critério de parada compara G_l com o valor de `settings.window` passos antes.
    """
    label = "gd-sep" if isinstance(init, SeparatedJptaConfig) else "gd-joint"
    half_span = max(grid.M / 2, 1.0)
    objective = LogMeanObjective(geometry, grid, scenario)
    g_max = max_log_mean_gain(geometry, scenario)
    params = _initial_params(quantize(init, spec, grid), grid, half_span)
    adam = AdamOptimizer.from_settings(settings)
    trace = OptimizationTrace()

    progress = tqdm(total=settings.max_steps, desc=label, unit="passo", disable=not settings.show_progress)
    try:
        for _ in range(settings.max_steps):
            x1, x2 = _joint_variables(params, half_span)
            try:
                g_l, d_x1, d_x2 = objective.value_and_partials(x1, x2)
            except DegenerateConfigurationError as exc:
                raise SolverError(f"{label}: {exc}", trace) from exc
            loss = (g_max - g_l) ** 2
            if not math.isfinite(loss):
                raise SolverError(f"{label}: perda não finita no passo {trace.sweeps_run}", trace)
            trace.objective_history.append(g_l)
            trace.loss_history.append(loss)
            trace.sweeps_run += 1
            progress.update(1)

            history = trace.objective_history
            if len(history) > settings.window:
                if abs(history[-1] - history[-1 - settings.window]) < settings.zeta * abs(history[-1]):
                    trace.converged = True
                    break

            scale = -2.0 * (g_max - g_l)
            grads = _param_grads(params, scale * d_x1, scale * d_x2, half_span)
            params = adam.step(params, grads)
    finally:
        progress.close()

    if not trace.converged:
        log.warning(f"{label}: sem convergência após {settings.max_steps} passos; usando o último ponto")
    continuous = normalize_delays(_to_config(params, grid, half_span), grid, spec.tau_max)
    trace.final_config = quantize(continuous, spec, grid)
    log.info(
        f"{label}: G_l {trace.objective_history[0]:.3f} -> {trace.objective_history[-1]:.3f} dB "
        f"em {trace.sweeps_run} passos"
    )
    return trace.final_config, trace
