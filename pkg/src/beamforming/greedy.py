"""Busca gulosa coordenada a coordenada sobre as grades quantizadas de atraso e fase.

Cada varredura troca o atraso de cada elemento pelo melhor valor da grade (mantendo todo o
resto fixo) e depois faz o mesmo com as fases, em ordem y externo / z interno. Para a
busca ser viável com centenas de elementos e subportadoras, as somas complexas por subportadora ficam em
memória e cada candidato só substitui a contribuição do elemento alterado.
"""
import logging
from typing import Tuple

import numpy as np
from tqdm import tqdm

from beamforming.gain import subcarrier_gains
from beamforming.quantize import delay_steps, phase_steps, quantize
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

# Melhora mínima para aceitar a troca de uma coordenada.
MOVE_TOLERANCE = 1e-12


class _GainState:
    """Base comum: cada subportadora m pertence a um único usuário e usa a direção dele."""

    def __init__(self, geometry: ArrayGeometry, grid: FrequencyGrid, scenario: UserScenario, spec: QuantizationSpec):
        self.geometry = geometry
        self.grid = grid
        self.scenario = scenario
        self.spec = spec
        users = scenario.row_users()
        self.frequencies = grid.frequencies
        self.ratios = grid.ratios
        self.row_u = np.array([d.u for d in scenario.directions])[users]
        self.row_v = np.array([d.v for d in scenario.directions])[users]
        self.starts = scenario.block_starts
        self.sizes = np.asarray(scenario.sizes, dtype=float)
        self.delay_phasors = np.exp(1j * 2 * np.pi * spec.delay_grid[:, None] * self.frequencies[None, :])
        self.phase_phasors = np.exp(1j * spec.phase_grid)

    def objective_from_sums(self, sums: np.ndarray) -> np.ndarray:
        """G_l para uma ou várias linhas de somas complexas (último eixo = subportadoras)."""
        gains = np.abs(sums) ** 2 / self.geometry.n_elements
        means = np.add.reduceat(gains, self.starts, axis=-1) / self.sizes
        with np.errstate(divide="ignore"):
            return np.sum(10.0 * np.log10(means), axis=-1)

    def row_gains(self) -> np.ndarray:
        return np.abs(self.sums()) ** 2 / self.geometry.n_elements

    def objective(self) -> float:
        return float(self.objective_from_sums(self.sums()))

    def oracle_check(self) -> float:
        """Maior diferença entre os ganhos incrementais e a soma direta, relativa a max(ganho, 1)."""
        config = self.config()
        direct = np.concatenate([
            subcarrier_gains(self.geometry, self.grid, config, d, self.scenario.subcarriers(i))
            for i, d in enumerate(self.scenario.directions)
        ])
        incremental = self.row_gains()
        scale = np.maximum(np.abs(direct), 1.0)
        return float(np.max(np.abs(incremental - direct) / scale))

    def sums(self) -> np.ndarray:
        raise NotImplementedError

    def config(self):
        raise NotImplementedError


class IncrementalGainState(_GainState):
    """S[m] = sum_{y,z} exp(j*(phi + 2*pi*f_m*tau - Omega_m)) com índices de grade por elemento."""

    def __init__(self, geometry, grid, scenario, config: JptaConfig, spec: QuantizationSpec):
        super().__init__(geometry, grid, scenario, spec)
        y = np.arange(geometry.n_az)[None, :, None]
        z = np.arange(geometry.n_el)[None, None, :]
        omega = np.pi * self.ratios[:, None, None] * (y * self.row_u[:, None, None] + z * self.row_v[:, None, None])
        self.steering = np.exp(-1j * omega)
        self.delay_idx = delay_steps(config.delay, spec)
        self.phase_idx = phase_steps(config.phase, spec)
        self.refresh()

    def term(self, y: int, z: int) -> np.ndarray:
        return (
            self.phase_phasors[self.phase_idx[y, z]]
            * self.delay_phasors[self.delay_idx[y, z]]
            * self.steering[:, y, z]
        )

    def refresh(self) -> None:
        terms = (
            self.phase_phasors[self.phase_idx][None, :, :]
            * self.delay_phasors[self.delay_idx].transpose(2, 0, 1)
            * self.steering
        )
        self._sums = terms.sum(axis=(1, 2))

    def sums(self) -> np.ndarray:
        return self._sums

    def delay_candidates(self, y: int, z: int) -> np.ndarray:
        base = self.phase_phasors[self.phase_idx[y, z]] * self.steering[:, y, z]
        rest = self._sums - self.term(y, z)
        return self.objective_from_sums(rest[None, :] + self.delay_phasors * base[None, :])

    def phase_candidates(self, y: int, z: int) -> np.ndarray:
        base = self.delay_phasors[self.delay_idx[y, z]] * self.steering[:, y, z]
        rest = self._sums - self.term(y, z)
        return self.objective_from_sums(rest[None, :] + self.phase_phasors[:, None] * base[None, :])

    def delay_idx_at(self, key) -> int:
        return int(self.delay_idx[key])

    def phase_idx_at(self, key) -> int:
        return int(self.phase_idx[key])

    def set_delay(self, y: int, z: int, index: int) -> None:
        old = self.term(y, z)
        self.delay_idx[y, z] = index
        self._sums = self._sums - old + self.term(y, z)

    def set_phase(self, y: int, z: int, index: int) -> None:
        old = self.term(y, z)
        self.phase_idx[y, z] = index
        self._sums = self._sums - old + self.term(y, z)

    def config(self) -> JptaConfig:
        return JptaConfig(phase=self.phase_idx * self.spec.phase_step, delay=self.delay_idx * self.spec.tau_step)


class SeparatedGainState(_GainState):
    """S[m] = A[m] * E[m], com A a soma do eixo y e E a soma do eixo z."""

    def __init__(self, geometry, grid, scenario, config: SeparatedJptaConfig, spec: QuantizationSpec):
        super().__init__(geometry, grid, scenario, spec)
        y = np.arange(geometry.n_az)[None, :]
        z = np.arange(geometry.n_el)[None, :]
        self.steering_az = np.exp(-1j * np.pi * self.ratios[:, None] * y * self.row_u[:, None])
        self.steering_el = np.exp(-1j * np.pi * self.ratios[:, None] * z * self.row_v[:, None])
        self.delay_idx = {"az": delay_steps(config.delay_az, spec), "el": delay_steps(config.delay_el, spec)}
        self.phase_idx = {"az": phase_steps(config.phase_az, spec), "el": phase_steps(config.phase_el, spec)}
        self.refresh()

    def _steering(self, axis: str) -> np.ndarray:
        return self.steering_az if axis == "az" else self.steering_el

    def term(self, axis: str, n: int) -> np.ndarray:
        return (
            self.phase_phasors[self.phase_idx[axis][n]]
            * self.delay_phasors[self.delay_idx[axis][n]]
            * self._steering(axis)[:, n]
        )

    def _axis_sum(self, axis: str) -> np.ndarray:
        terms = (
            self.phase_phasors[self.phase_idx[axis]][None, :]
            * self.delay_phasors[self.delay_idx[axis]].T
            * self._steering(axis)
        )
        return terms.sum(axis=1)

    def refresh(self) -> None:
        self._partial = {"az": self._axis_sum("az"), "el": self._axis_sum("el")}

    def sums(self) -> np.ndarray:
        return self._partial["az"] * self._partial["el"]

    def _other(self, axis: str) -> np.ndarray:
        return self._partial["el" if axis == "az" else "az"]

    def delay_candidates(self, axis: str, n: int) -> np.ndarray:
        base = self.phase_phasors[self.phase_idx[axis][n]] * self._steering(axis)[:, n]
        rest = self._partial[axis] - self.term(axis, n)
        partial = rest[None, :] + self.delay_phasors * base[None, :]
        return self.objective_from_sums(partial * self._other(axis)[None, :])

    def phase_candidates(self, axis: str, n: int) -> np.ndarray:
        base = self.delay_phasors[self.delay_idx[axis][n]] * self._steering(axis)[:, n]
        rest = self._partial[axis] - self.term(axis, n)
        partial = rest[None, :] + self.phase_phasors[:, None] * base[None, :]
        return self.objective_from_sums(partial * self._other(axis)[None, :])

    def delay_idx_at(self, key) -> int:
        return int(self.delay_idx[key[0]][key[1]])

    def phase_idx_at(self, key) -> int:
        return int(self.phase_idx[key[0]][key[1]])

    def set_delay(self, axis: str, n: int, index: int) -> None:
        old = self.term(axis, n)
        self.delay_idx[axis][n] = index
        self._partial[axis] = self._partial[axis] - old + self.term(axis, n)

    def set_phase(self, axis: str, n: int, index: int) -> None:
        old = self.term(axis, n)
        self.phase_idx[axis][n] = index
        self._partial[axis] = self._partial[axis] - old + self.term(axis, n)

    def config(self) -> SeparatedJptaConfig:
        step, tau = self.spec.phase_step, self.spec.tau_step
        return SeparatedJptaConfig(
            phase_az=self.phase_idx["az"] * step,
            delay_az=self.delay_idx["az"] * tau,
            phase_el=self.phase_idx["el"] * step,
            delay_el=self.delay_idx["el"] * tau,
        )


def _improve(candidates: np.ndarray, current: int) -> int:
    best = int(np.argmax(candidates))
    if candidates[best] > candidates[current] + MOVE_TOLERANCE:
        return best
    return current


def _run_sweeps(state, coordinates, settings: OptimizerSettings, label: str) -> OptimizationTrace:
    trace = OptimizationTrace(objective_history=[state.objective()])
    sweeps = range(settings.max_sweeps)
    if settings.show_progress:
        sweeps = tqdm(sweeps, desc=label, unit="varredura")
    for _ in sweeps:
        g_first = state.objective()
        moves = 0
        for key in coordinates:
            best = _improve(state.delay_candidates(*key), state.delay_idx_at(key))
            if best != state.delay_idx_at(key):
                state.set_delay(*key, best)
                moves += 1
        for key in coordinates:
            best = _improve(state.phase_candidates(*key), state.phase_idx_at(key))
            if best != state.phase_idx_at(key):
                state.set_phase(*key, best)
                moves += 1
        state.refresh()
        g_later = state.objective()
        trace.objective_history.append(g_later)
        trace.sweeps_run += 1
        log.debug(f"{label}: varredura {trace.sweeps_run}, G_l {g_first:.4f} -> {g_later:.4f} dB, {moves} trocas")
        if abs(g_later - g_first) < settings.zeta * abs(g_later):
            trace.converged = True
            break
    if not trace.converged:
        log.warning(f"{label}: sem convergência após {settings.max_sweeps} varreduras; retornando o melhor ponto")
    trace.final_config = state.config()
    return trace


def greedy_optimize_joint(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    scenario: UserScenario,
    init: JptaConfig,
    spec: QuantizationSpec,
    settings: OptimizerSettings,
) -> Tuple[JptaConfig, OptimizationTrace]:
    state = IncrementalGainState(geometry, grid, scenario, quantize(init, spec, grid), spec)
    coordinates = [(y, z) for y in range(geometry.n_az) for z in range(geometry.n_el)]
    trace = _run_sweeps(state, coordinates, settings, "greedy-joint")
    log.info(
        f"greedy-joint: G_l {trace.objective_history[0]:.3f} -> {trace.objective_history[-1]:.3f} dB "
        f"em {trace.sweeps_run} varreduras"
    )
    return trace.final_config, trace


def greedy_optimize_separated(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    scenario: UserScenario,
    init: SeparatedJptaConfig,
    spec: QuantizationSpec,
    settings: OptimizerSettings,
) -> Tuple[SeparatedJptaConfig, OptimizationTrace]:
    state = SeparatedGainState(geometry, grid, scenario, quantize(init, spec, grid), spec)
    coordinates = [("az", y) for y in range(geometry.n_az)] + [("el", z) for z in range(geometry.n_el)]
    trace = _run_sweeps(state, coordinates, settings, "greedy-sep")
    log.info(
        f"greedy-sep: G_l {trace.objective_history[0]:.3f} -> {trace.objective_history[-1]:.3f} dB "
        f"em {trace.sweeps_run} varreduras"
    )
    return trace.final_config, trace
