import logging
from typing import Callable, Dict, List, Optional, Tuple

from beamforming.gradient import gd_optimize
from beamforming.greedy import greedy_optimize_joint, greedy_optimize_separated
from beamforming.linsys import joint_analytic, make_scenario, separated_analytic
from beamforming.quantize import quantize
from models.errors import ConfigError, InvalidInputError
from models.models import (
    SOLVER_NAMES,
    ArrayGeometry,
    Direction,
    ExperimentConfig,
    FrequencyGrid,
    OptimizationTrace,
    OptimizerSettings,
    QuantizationSpec,
    UserScenario,
)

log = logging.getLogger(__name__)

# Setor de cobertura: 120 graus em azimute, 30 graus em elevação.
AZ_SPAN = (-60.0, 60.0)
EL_SPAN = (90.0, 120.0)

SolverFn = Callable[
    [ArrayGeometry, FrequencyGrid, UserScenario, QuantizationSpec, OptimizerSettings, bool],
    Tuple[object, Optional[OptimizationTrace]],
]


def place_users(n_users: int) -> List[Direction]:
    """Usuários espalhados uniformemente no setor, i = 0..N_u-1, extremos incluídos."""
    if n_users < 1:
        raise InvalidInputError(f"n_users deve ser >= 1, recebido {n_users}")
    if n_users == 1:
        return [Direction(theta_az=sum(AZ_SPAN) / 2, theta_el=sum(EL_SPAN) / 2)]
    az_step = (AZ_SPAN[1] - AZ_SPAN[0]) / (n_users - 1)
    el_step = (EL_SPAN[1] - EL_SPAN[0]) / (n_users - 1)
    return [
        Direction(theta_az=AZ_SPAN[0] + i * az_step, theta_el=EL_SPAN[0] + i * el_step)
        for i in range(n_users)
    ]


def _analytic(joint: bool, criterion: str) -> SolverFn:
    def run(geometry, grid, scenario, spec, settings, quantize_result):
        solve = joint_analytic if joint else separated_analytic
        config = solve(geometry, grid, scenario, criterion=criterion, tau_max=spec.tau_max)
        return (quantize(config, spec, grid) if quantize_result else config), None

    return run


def _iterative(joint: bool, method: str) -> SolverFn:
    def run(geometry, grid, scenario, spec, settings, quantize_result):
        solve = joint_analytic if joint else separated_analytic
        init = solve(geometry, grid, scenario, criterion="ls", tau_max=spec.tau_max)
        if method == "gd":
            return gd_optimize(geometry, grid, scenario, init, spec, settings)
        optimizer = greedy_optimize_joint if joint else greedy_optimize_separated
        return optimizer(geometry, grid, scenario, init, spec, settings)

    return run


SOLVERS: Dict[str, SolverFn] = {
    "joint-ls": _analytic(True, "ls"),
    "joint-minimax": _analytic(True, "minimax"),
    "sep-ls": _analytic(False, "ls"),
    "sep-minimax": _analytic(False, "minimax"),
    "greedy-joint": _iterative(True, "greedy"),
    "greedy-sep": _iterative(False, "greedy"),
    "gd-joint": _iterative(True, "gd"),
    "gd-sep": _iterative(False, "gd"),
}


class ConfigFactory:
    """Monta objetos de domínio a partir de um ExperimentConfig."""

    @staticmethod
    def solver(name: str) -> SolverFn:
        try:
            return SOLVERS[name]
        except KeyError:
            raise InvalidInputError(f"Solver desconhecido '{name}'; válidos: {', '.join(SOLVER_NAMES)}") from None

    @staticmethod
    def directions(config: ExperimentConfig, n_users: Optional[int] = None) -> List[Direction]:
        if n_users is not None and config.directions is not None:
            raise ConfigError(
                f"Varredura de {n_users} usuário(s) incompatível com {len(config.directions)} direções explícitas; "
                "remova directions ou sweep.n_users",
                field="sweep.n_users",
            )
        if n_users is None and config.directions is not None:
            return [Direction(theta_az=az, theta_el=el) for az, el in config.directions]
        return place_users(n_users if n_users is not None else config.user_count)

    @staticmethod
    def scenario(
        config: ExperimentConfig,
        alphas: Optional[List[float]] = None,
        n_users: Optional[int] = None,
    ) -> UserScenario:
        if alphas is None and n_users is None:
            alphas = config.alphas
        if n_users is None and config.directions is None and config.n_users is None and alphas is not None:
            n_users = len(alphas)
        directions = ConfigFactory.directions(config, n_users)
        return make_scenario(directions, alphas, config.subcarrier_count, config.block_mode)

    @staticmethod
    def scenario_points(config: ExperimentConfig) -> List[Tuple[str, UserScenario]]:
        """Lista (scenario_id, cenário) de todos os pontos do experimento, na ordem da varredura."""
        sweep = config.sweep
        if sweep is None:
            return [(f"{config.name}-000", ConfigFactory.scenario(config))]

        if sweep.alphas is not None:
            scenarios = [ConfigFactory.scenario(config, alphas=list(a)) for a in sweep.alphas]
        elif sweep.alpha_two_user is not None:
            explicit = config.directions is not None or config.n_users is not None
            if explicit and config.user_count != 2:
                raise InvalidInputError(f"alpha_two_user exige 2 usuários, configurados {config.user_count}")
            scenarios = [ConfigFactory.scenario(config, alphas=[a, 1.0 - a]) for a in sweep.alpha_two_user]
        else:
            scenarios = [ConfigFactory.scenario(config, n_users=n) for n in sweep.n_users]

        log.info(f"Varredura '{config.name}' com {len(scenarios)} ponto(s)")
        return [(f"{config.name}-{i:03d}", s) for i, s in enumerate(scenarios)]
