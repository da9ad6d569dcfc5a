"""Sistemas lineares por elemento sobre as subportadoras e suas soluções analíticas.

Cada elemento (y, z) gera um sistema A x = b com uma linha por subportadora:
A = [1, m'] com m' = -M/2..M/2, x = [x1, x2] e x2 = 2*pi*delta_f*tau. As linhas do usuário i
miram nu(y, z, i) + 2*pi*k(y, z, i), com k escolhido para manter os alvos vizinhos a no
máximo pi de distância.
"""
import logging
import math
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from beamforming.gain import normalize_delays
from models.errors import InvalidInputError
from models.models import (
    ArrayGeometry,
    Direction,
    FrequencyGrid,
    JptaConfig,
    SeparatedJptaConfig,
    UserScenario,
)

log = logging.getLogger(__name__)

Criterion = Literal["ls", "minimax"]
BlockMode = Literal["cumulative", "floor"]


class SubbandSystem(BaseModel):
    """Sistema empilhado de um elemento (ou de um eixo, no caso separado)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rhs: np.ndarray
    offsets: Tuple[int, ...]
    nu: Tuple[float, ...]

    @field_validator("rhs", mode="before")
    @classmethod
    def _as_vector(cls, value) -> np.ndarray:
        arr = np.array(value, dtype=float, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("rhs deve ser um vetor não vazio")
        arr.setflags(write=False)
        return arr

    @property
    def m_count(self) -> int:
        return self.rhs.size

    @property
    def row_index(self) -> np.ndarray:
        """Segunda coluna de A: m' = -M/2 .. M/2."""
        return np.arange(self.m_count, dtype=float) - (self.m_count - 1) / 2

    @property
    def design_matrix(self) -> np.ndarray:
        return np.column_stack([np.ones(self.m_count), self.row_index])


class FitResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    phase_var: float
    slope_var: float
    residual_l2: float
    residual_linf: float
    degenerate: bool = False


def round_half_away(value):
    """Arredondamento com empates para longe de zero (independe da plataforma)."""
    value = np.asarray(value, dtype=float)
    return np.sign(value) * np.floor(np.abs(value) + 0.5)


def nu(y: int, z: int, direction: Direction) -> float:
    """Valor de steering do elemento no centro da banda: y*pi*sin(az)*sin(el) + z*pi*cos(el)."""
    if y < 0 or z < 0:
        raise InvalidInputError(f"Índices de elemento negativos: ({y}, {z})")
    return y * math.pi * direction.u + z * math.pi * direction.v


def k_offsets(nus) -> np.ndarray:
    """Offsets inteiros k por usuário; aceita eixos extras depois do eixo de usuários."""
    values = np.asarray(nus, dtype=float)
    if values.shape[0] < 1:
        raise InvalidInputError("k_offsets precisa de pelo menos um usuário")
    k = np.zeros(values.shape, dtype=int)
    for i in range(1, values.shape[0]):
        step = round_half_away((values[i - 1] - values[i]) / (2 * np.pi))
        k[i] = k[i - 1] + step.astype(int)
    return k


def partition_subbands(
    alphas: Sequence[float], m_count: int, mode: BlockMode = "cumulative"
) -> Tuple[Tuple[int, int], ...]:
    """Blocos contíguos de subportadoras por usuário, na ordem dos usuários.

    cumulative: fronteiras c_i = floor((alpha_1 + ... + alpha_i) * (M+1)).
    floor: cada usuário recebe floor(alpha_i * (M+1)); o último absorve o resto.
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas):
        raise InvalidInputError(f"Razões de banda inválidas: {alphas}")
    if abs(sum(alphas) - 1.0) > 1e-9:
        raise InvalidInputError(f"Razões de banda devem somar 1, soma = {sum(alphas)}")
    if m_count < len(alphas):
        raise InvalidInputError(f"{m_count} subportadoras não bastam para {len(alphas)} usuários")

    if mode == "cumulative":
        cumulative = np.cumsum(alphas)
        bounds = [int(math.floor(c * m_count + 1e-9)) for c in cumulative[:-1]] + [m_count]
    elif mode == "floor":
        sizes = [int(math.floor(a * m_count + 1e-9)) for a in alphas[:-1]]
        bounds = list(np.cumsum(sizes).astype(int)) + [m_count]
    else:
        raise InvalidInputError(f"Modo de partição desconhecido: {mode}")

    blocks = []
    start = 0
    for stop in bounds:
        if stop <= start:
            raise InvalidInputError(f"Usuário sem subportadoras com alphas={alphas} e m_count={m_count}")
        blocks.append((start, int(stop)))
        start = int(stop)
    return tuple(blocks)


def make_scenario(
    directions: Sequence[Direction],
    alphas: Optional[Sequence[float]],
    m_count: int,
    mode: BlockMode = "cumulative",
) -> UserScenario:
    if alphas is None:
        alphas = [1.0 / len(directions)] * len(directions)
    if len(alphas) != len(directions):
        raise InvalidInputError(f"{len(alphas)} razões de banda para {len(directions)} usuários")
    return UserScenario(
        directions=tuple(directions),
        alphas=tuple(float(a) for a in alphas),
        subbands=partition_subbands(alphas, m_count, mode),
    )


def system_from_nus(nus: Sequence[float], scenario: UserScenario) -> SubbandSystem:
    nus = np.asarray(nus, dtype=float)
    k = k_offsets(nus)
    targets = nus + 2 * np.pi * k
    rhs = np.repeat(targets, scenario.sizes)
    return SubbandSystem(rhs=rhs, offsets=tuple(int(v) for v in k), nu=tuple(float(v) for v in nus))


def build_system(
    geometry: ArrayGeometry, grid: FrequencyGrid, scenario: UserScenario, y: int, z: int
) -> SubbandSystem:
    if not (0 <= y < geometry.n_az and 0 <= z < geometry.n_el):
        raise InvalidInputError(f"Elemento ({y}, {z}) fora do arranjo {geometry.shape}")
    if scenario.m_count != grid.m_count:
        raise InvalidInputError(
            f"Cenário particiona {scenario.m_count} subportadoras, grade tem {grid.m_count}"
        )
    return system_from_nus([nu(y, z, d) for d in scenario.directions], scenario)


def residuals(system: SubbandSystem, phase_var: float, slope_var: float) -> np.ndarray:
    """e = A x - b."""
    return phase_var + slope_var * system.row_index - system.rhs


def _fit(system: SubbandSystem, phase_var: float, slope_var: float, degenerate: bool = False) -> FitResult:
    e = residuals(system, phase_var, slope_var)
    return FitResult(
        phase_var=float(phase_var),
        slope_var=float(slope_var),
        residual_l2=float(np.linalg.norm(e)),
        residual_linf=float(np.max(np.abs(e))),
        degenerate=degenerate,
    )


def solve_ls(system: SubbandSystem) -> FitResult:
    """Mínimos quadrados: com a coluna m' simétrica, x1 = média(b) e x2 = sum(m'*b) / sum(m'^2)."""
    if system.m_count == 1:
        log.debug("Sistema com uma linha: inclinação indeterminada, usando 0")
        return _fit(system, system.rhs[0], 0.0, degenerate=True)
    t = system.row_index
    b = system.rhs
    return _fit(system, b.mean(), float(np.dot(t, b) / np.dot(t, t)))


def _hull_slopes(t: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inclinações das arestas das envoltórias inferior e superior (t já ordenado)."""

    def chain(indices: Iterable[int], keep_turn: float) -> List[int]:
        hull: List[int] = []
        for i in indices:
            while len(hull) >= 2:
                o, a = hull[-2], hull[-1]
                cross = (t[a] - t[o]) * (b[i] - b[o]) - (b[a] - b[o]) * (t[i] - t[o])
                if cross * keep_turn > 0:
                    break
                hull.pop()
            hull.append(i)
        return hull

    lower = chain(range(t.size), 1.0)
    upper = chain(range(t.size), -1.0)
    slopes = []
    for hull in (lower, upper):
        for a, c in zip(hull[:-1], hull[1:]):
            slopes.append((b[c] - b[a]) / (t[c] - t[a]))
    return np.unique(np.asarray(slopes, dtype=float))


def solve_minimax(system: SubbandSystem) -> FitResult:
    """Ajuste de Chebyshev (norma infinito) exato de uma reta.

    A largura vertical da faixa que contém os pontos (m', b) é convexa e linear por partes
    na inclinação, com quebras nas inclinações das arestas da envoltória convexa; o mínimo
    está numa dessas inclinações.
    """
    if system.m_count == 1:
        return _fit(system, system.rhs[0], 0.0, degenerate=True)
    t = system.row_index
    b = system.rhs
    slopes = _hull_slopes(t, b)
    shifted = b[None, :] - slopes[:, None] * t[None, :]
    top = shifted.max(axis=1)
    bottom = shifted.min(axis=1)
    best = int(np.argmin(top - bottom))
    return _fit(system, (top[best] + bottom[best]) / 2, slopes[best])


def equioscillation_points(system: SubbandSystem, fit: FitResult, tol: float = 1e-9) -> List[Tuple[int, int]]:
    """Linhas que atingem +-residual_linf, com o sinal do erro, em ordem crescente."""
    e = residuals(system, fit.phase_var, fit.slope_var)
    level = fit.residual_linf
    hits = np.flatnonzero(np.abs(np.abs(e) - level) <= tol * max(1.0, level))
    return [(int(i), int(np.sign(e[i]))) for i in hits]


def alternation_count(points: Sequence[Tuple[int, int]]) -> int:
    """Número de trocas de sinal + 1 ao longo dos pontos extremos."""
    signs = [s for _, s in points if s != 0]
    if not signs:
        return 0
    return 1 + sum(1 for a, b in zip(signs[:-1], signs[1:]) if a != b)


def weighted_phase(system: SubbandSystem, alphas: Sequence[float]) -> float:
    """x1 na forma sum_i alpha_i * (nu_i + 2*pi*k_i)."""
    targets = np.asarray(system.nu) + 2 * np.pi * np.asarray(system.offsets)
    return float(np.dot(alphas, targets))


def _solver(criterion: str):
    if criterion == "ls":
        return solve_ls
    if criterion == "minimax":
        return solve_minimax
    raise InvalidInputError(f"Critério desconhecido: {criterion} (use 'ls' ou 'minimax')")


def fit_to_hardware(phase_var: np.ndarray, slope_var: np.ndarray, grid: FrequencyGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Converte (x1, x2) para (phi, tau): tau = x2 / (2*pi*delta_f), phi = x1 - 2*pi*f_c*tau mod 2*pi."""
    delay = np.asarray(slope_var, dtype=float) / (2 * np.pi * grid.delta_f)
    phase = np.mod(np.asarray(phase_var, dtype=float) - 2 * np.pi * grid.f_c * delay, 2 * np.pi)
    return phase, delay


def hardware_to_fit(phase: np.ndarray, delay: np.ndarray, grid: FrequencyGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Inverso de fit_to_hardware (x1 reduzido a [0, 2pi))."""
    slope_var = 2 * np.pi * grid.delta_f * np.asarray(delay, dtype=float)
    phase_var = np.mod(np.asarray(phase, dtype=float) + 2 * np.pi * grid.f_c * np.asarray(delay, dtype=float), 2 * np.pi)
    return phase_var, slope_var


def joint_analytic(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    scenario: UserScenario,
    criterion: Criterion = "ls",
    tau_max: Optional[float] = None,
    normalize: bool = True,
) -> JptaConfig:
    """Resolve os n_az * n_el sistemas independentes e monta a configuração de hardware."""
    solve = _solver(criterion)
    phase_var = np.zeros(geometry.shape)
    slope_var = np.zeros(geometry.shape)
    for y in range(geometry.n_az):
        for z in range(geometry.n_el):
            fit = solve(build_system(geometry, grid, scenario, y, z))
            phase_var[y, z] = fit.phase_var
            slope_var[y, z] = fit.slope_var
    phase, delay = fit_to_hardware(phase_var, slope_var, grid)
    config = JptaConfig(phase=phase, delay=delay)
    log.info(f"Solução analítica conjunta ({criterion}) para {geometry.n_elements} elementos")
    return normalize_delays(config, grid, tau_max) if normalize else config


def separated_analytic(
    geometry: ArrayGeometry,
    grid: FrequencyGrid,
    scenario: UserScenario,
    criterion: Criterion = "ls",
    tau_max: Optional[float] = None,
    normalize: bool = True,
) -> SeparatedJptaConfig:
    """Resolve n_az sistemas do eixo y (alvo y*pi*u_i) e n_el do eixo z (alvo z*pi*v_i)."""
    solve = _solver(criterion)
    if scenario.m_count != grid.m_count:
        raise InvalidInputError(
            f"Cenário particiona {scenario.m_count} subportadoras, grade tem {grid.m_count}"
        )
    u = np.array([d.u for d in scenario.directions])
    v = np.array([d.v for d in scenario.directions])

    az_fits = [solve(system_from_nus(y * np.pi * u, scenario)) for y in range(geometry.n_az)]
    el_fits = [solve(system_from_nus(z * np.pi * v, scenario)) for z in range(geometry.n_el)]

    phase_az, delay_az = fit_to_hardware(
        np.array([f.phase_var for f in az_fits]), np.array([f.slope_var for f in az_fits]), grid
    )
    phase_el, delay_el = fit_to_hardware(
        np.array([f.phase_var for f in el_fits]), np.array([f.slope_var for f in el_fits]), grid
    )
    config = SeparatedJptaConfig(phase_az=phase_az, delay_az=delay_az, phase_el=phase_el, delay_el=delay_el)
    log.info(
        f"Solução analítica separada ({criterion}) com {geometry.n_az} + {geometry.n_el} sistemas"
    )
    return normalize_delays(config, grid, tau_max) if normalize else config
