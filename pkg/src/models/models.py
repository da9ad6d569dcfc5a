import math
from typing import Any, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SOLVER_NAMES: Tuple[str, ...] = (
    "joint-ls",
    "joint-minimax",
    "sep-ls",
    "sep-minimax",
    "greedy-joint",
    "greedy-sep",
    "gd-joint",
    "gd-sep",
)


def _frozen_array(value: Any, ndim: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} deve ter {ndim} dimensão(ões), recebido shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contém valores não finitos")
    arr.setflags(write=False)
    return arr


class ArrayGeometry(BaseModel):
    """Arranjo planar uniforme com espaçamento de meio comprimento de onda em f_c."""

    model_config = ConfigDict(frozen=True)

    n_az: int = Field(..., ge=1, description="Elementos ao longo do eixo y (azimute)")
    n_el: int = Field(..., ge=1, description="Elementos ao longo do eixo z (elevação)")

    @property
    def n_elements(self) -> int:
        return self.n_az * self.n_el

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_az, self.n_el)


class FrequencyGrid(BaseModel):
    """Grade de subportadoras OFDM: f_m = f_c + (m - M/2) * delta_f, m = 0..M."""

    model_config = ConfigDict(frozen=True)

    f_c: float = Field(..., gt=0)
    delta_f: float = Field(..., gt=0)
    m_count: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _check_grid(self) -> "FrequencyGrid":
        if self.m_count % 2 == 0:
            raise ValueError(f"m_count deve ser ímpar (M+1), recebido {self.m_count}")
        if self.f_c - (self.m_count // 2) * self.delta_f <= 0:
            raise ValueError("A menor subportadora ficaria com frequência <= 0")
        return self

    @property
    def M(self) -> int:
        return self.m_count - 1

    @property
    def offsets(self) -> np.ndarray:
        """Índices centrados m' = -M/2 .. M/2."""
        return np.arange(self.m_count, dtype=float) - self.M / 2

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_c + self.offsets * self.delta_f

    @property
    def ratios(self) -> np.ndarray:
        return self.frequencies / self.f_c

    def frequency(self, m: int) -> float:
        return self.f_c + (m - self.M / 2) * self.delta_f


class Direction(BaseModel):
    """AoA em graus; elevação medida a partir do eixo +z."""

    model_config = ConfigDict(frozen=True)

    theta_az: float = Field(..., ge=-180.0, le=180.0)
    theta_el: float = Field(..., ge=0.0, le=180.0)

    @property
    def u(self) -> float:
        """sin(az) * sin(el): fase espacial por elemento no eixo y, em unidades de pi."""
        return math.sin(math.radians(self.theta_az)) * math.sin(math.radians(self.theta_el))

    @property
    def v(self) -> float:
        """cos(el): fase espacial por elemento no eixo z, em unidades de pi."""
        return math.cos(math.radians(self.theta_el))

    def as_tuple(self) -> Tuple[float, float]:
        return (self.theta_az, self.theta_el)


class JptaConfig(BaseModel):
    """Fase (rad) e atraso (s) por elemento, matrizes n_az x n_el."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phase: np.ndarray
    delay: np.ndarray

    @field_validator("phase", "delay", mode="before")
    @classmethod
    def _as_matrix(cls, value: Any, info) -> np.ndarray:
        return _frozen_array(value, 2, info.field_name)

    @model_validator(mode="after")
    def _same_shape(self) -> "JptaConfig":
        if self.phase.shape != self.delay.shape:
            raise ValueError(f"phase {self.phase.shape} e delay {self.delay.shape} com dimensões diferentes")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return self.phase.shape

    @classmethod
    def zeros(cls, geometry: ArrayGeometry) -> "JptaConfig":
        return cls(phase=np.zeros(geometry.shape), delay=np.zeros(geometry.shape))


class SeparatedJptaConfig(BaseModel):
    """Configuração fatorada por eixo: phase[y,z] = phase_az[y] + phase_el[z] (idem para delay)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phase_az: np.ndarray
    delay_az: np.ndarray
    phase_el: np.ndarray
    delay_el: np.ndarray

    @field_validator("phase_az", "delay_az", "phase_el", "delay_el", mode="before")
    @classmethod
    def _as_vector(cls, value: Any, info) -> np.ndarray:
        return _frozen_array(value, 1, info.field_name)

    @model_validator(mode="after")
    def _same_lengths(self) -> "SeparatedJptaConfig":
        if self.phase_az.shape != self.delay_az.shape:
            raise ValueError("phase_az e delay_az com comprimentos diferentes")
        if self.phase_el.shape != self.delay_el.shape:
            raise ValueError("phase_el e delay_el com comprimentos diferentes")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.phase_az.size, self.phase_el.size)

    @classmethod
    def zeros(cls, geometry: ArrayGeometry) -> "SeparatedJptaConfig":
        return cls(
            phase_az=np.zeros(geometry.n_az),
            delay_az=np.zeros(geometry.n_az),
            phase_el=np.zeros(geometry.n_el),
            delay_el=np.zeros(geometry.n_el),
        )


class UserScenario(BaseModel):
    """Usuários, razões de banda e a partição contígua das subportadoras.

    `subbands[i]` é o intervalo semiaberto (início, fim) de índices m do usuário i.
    """

    model_config = ConfigDict(frozen=True)

    directions: Tuple[Direction, ...]
    alphas: Tuple[float, ...]
    subbands: Tuple[Tuple[int, int], ...]

    @model_validator(mode="after")
    def _check_partition(self) -> "UserScenario":
        n = len(self.directions)
        if n == 0:
            raise ValueError("O cenário precisa de pelo menos um usuário")
        if len(self.alphas) != n or len(self.subbands) != n:
            raise ValueError("directions, alphas e subbands devem ter o mesmo tamanho")
        if any(a <= 0 for a in self.alphas):
            raise ValueError(f"Todas as razões de banda devem ser > 0: {self.alphas}")
        if abs(sum(self.alphas) - 1.0) > 1e-9:
            raise ValueError(f"As razões de banda devem somar 1, soma = {sum(self.alphas)}")
        expected_start = 0
        for start, stop in self.subbands:
            if start != expected_start or stop <= start:
                raise ValueError(f"Subbandas não formam blocos contíguos e não vazios: {self.subbands}")
            expected_start = stop
        return self

    @property
    def n_users(self) -> int:
        return len(self.directions)

    @property
    def m_count(self) -> int:
        return self.subbands[-1][1]

    @property
    def sizes(self) -> List[int]:
        return [stop - start for start, stop in self.subbands]

    @property
    def block_starts(self) -> np.ndarray:
        return np.array([start for start, _ in self.subbands], dtype=int)

    def subcarriers(self, i: int) -> np.ndarray:
        start, stop = self.subbands[i]
        return np.arange(start, stop)

    def row_users(self) -> np.ndarray:
        """Usuário dono de cada subportadora, vetor de tamanho m_count."""
        return np.repeat(np.arange(self.n_users), self.sizes)


class QuantizationSpec(BaseModel):
    """Grades de hardware: atrasos {0, tau_step, ..., tau_max} e fases com `phase_bits` bits."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tau_step: float = Field(2.5e-9, gt=0)
    tau_max: float = Field(200e-9, gt=0)
    phase_bits: int = Field(6, ge=1)

    @model_validator(mode="after")
    def _check_range(self) -> "QuantizationSpec":
        if self.tau_max < self.tau_step:
            raise ValueError(f"tau_max ({self.tau_max}) deve ser >= tau_step ({self.tau_step})")
        return self

    @property
    def n_delay_steps(self) -> int:
        """Maior índice da grade de atrasos."""
        return int(math.floor(self.tau_max / self.tau_step + 1e-9))

    @property
    def delay_grid(self) -> np.ndarray:
        return np.arange(self.n_delay_steps + 1) * self.tau_step

    @property
    def phase_levels(self) -> int:
        return 2 ** self.phase_bits

    @property
    def phase_step(self) -> float:
        return 2 * math.pi / self.phase_levels

    @property
    def phase_grid(self) -> np.ndarray:
        return np.arange(self.phase_levels) * self.phase_step


class OptimizerSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    zeta: float = Field(1e-3, gt=0, description="Limiar relativo de convergência")
    max_sweeps: int = Field(50, ge=1)
    learning_rate: float = Field(0.1, gt=0)
    seed: int = 0
    max_steps: int = Field(3000, ge=1, description="Limite de passos do gradiente descendente")
    window: int = Field(50, ge=1, description="Janela (em passos) do critério de convergência do GD")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    show_progress: bool = False


class OptimizationTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    objective_history: List[float] = Field(default_factory=list)
    loss_history: List[float] = Field(default_factory=list)
    sweeps_run: int = 0
    converged: bool = False
    final_config: Optional[Any] = None


class MetricsReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_user_mean_gain: Tuple[float, ...]
    log_mean_gain: float
    solver_name: str
    wall_time: float = 0.0

    @property
    def per_user_gain_db(self) -> List[float]:
        return [10.0 * math.log10(g) for g in self.per_user_mean_gain]

    @property
    def spread_db(self) -> float:
        gains_db = self.per_user_gain_db
        return max(gains_db) - min(gains_db)


class SweepSpec(BaseModel):
    """Eixo de varredura opcional. Apenas um dos campos pode ser usado."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alphas: Optional[List[List[float]]] = None
    alpha_two_user: Optional[List[float]] = None
    n_users: Optional[List[int]] = None

    @model_validator(mode="after")
    def _one_axis(self) -> "SweepSpec":
        used = [name for name in ("alphas", "alpha_two_user", "n_users") if getattr(self, name) is not None]
        if len(used) != 1:
            raise ValueError(f"sweep deve definir exatamente um eixo, definidos: {used or 'nenhum'}")
        return self


class ExperimentConfig(BaseModel):
    """Experimento completo. Os valores padrão são os do cenário de referência 16x24 em 28 GHz."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "reference"
    n_az: int = Field(16, ge=1)
    n_el: int = Field(24, ge=1)
    f_c: float = Field(28e9, gt=0)
    bandwidth: float = Field(95e6, gt=0)
    delta_f: float = Field(120e3, gt=0)
    m_count: Optional[int] = Field(793, ge=1, description="M+1; se None, derivado de bandwidth / delta_f")

    n_users: Optional[int] = Field(None, ge=1)
    directions: Optional[List[Tuple[float, float]]] = None
    alphas: Optional[List[float]] = None

    solvers: List[str] = Field(default_factory=lambda: ["joint-ls"])
    quantization: QuantizationSpec = Field(default_factory=QuantizationSpec)
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    sweep: Optional[SweepSpec] = None

    block_mode: Literal["cumulative", "floor"] = "cumulative"
    quantize_analytic: bool = True
    output_dir: str = "./output"
    workers: int = Field(1, ge=1)

    export_maps: bool = False
    map_az_step: float = Field(1.0, gt=0)
    map_el_step: float = Field(0.5, gt=0)
    map_az_range: Tuple[float, float] = (-90.0, 90.0)
    map_el_range: Tuple[float, float] = (75.0, 135.0)

    @field_validator("solvers")
    @classmethod
    def _known_solvers(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in SOLVER_NAMES]
        if unknown:
            raise ValueError(f"Solvers desconhecidos {unknown}; válidos: {', '.join(SOLVER_NAMES)}")
        if not value:
            raise ValueError("Pelo menos um solver deve ser selecionado")
        return value

    @model_validator(mode="after")
    def _check_users(self) -> "ExperimentConfig":
        if self.directions is not None and self.n_users is not None and len(self.directions) != self.n_users:
            raise ValueError(f"n_users={self.n_users} não confere com {len(self.directions)} direções")
        if self.alphas is not None and self.sweep is None:
            expected = self.user_count
            if len(self.alphas) != expected:
                raise ValueError(f"alphas tem {len(self.alphas)} entradas para {expected} usuários")
        return self

    @property
    def user_count(self) -> int:
        if self.directions is not None:
            return len(self.directions)
        if self.n_users is not None:
            return self.n_users
        return len(self.alphas) if self.alphas is not None else 1

    @property
    def subcarrier_count(self) -> int:
        if self.m_count is not None:
            return self.m_count
        half = int(round(self.bandwidth / self.delta_f / 2))
        return 2 * half + 1

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(n_az=self.n_az, n_el=self.n_el)

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(f_c=self.f_c, delta_f=self.delta_f, m_count=self.subcarrier_count)


class RunRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario_id: str
    config_digest: str
    solver: str
    n_users: int
    alphas: Tuple[float, ...]
    subband_sizes: Tuple[int, ...]
    metrics: Optional[MetricsReport] = None
    converged: bool = True
    error: Optional[str] = None
    table_file: Optional[str] = None
    gain_map_file: Optional[str] = None
    timestamp: str = ""

    @property
    def ok(self) -> bool:
        return self.error is None and self.metrics is not None

    @property
    def gl_db(self) -> float:
        return self.metrics.log_mean_gain if self.metrics is not None else float("nan")
