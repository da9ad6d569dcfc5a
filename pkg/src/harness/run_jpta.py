import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# Adiciona src/ ao path para execução direta do script
current_dir = Path(__file__).resolve().parent
src_dir = current_dir.parent
if str(src_dir) not in sys.path:
    sys.path.insert(0, str(src_dir))

from beamforming.gain import find_peaks, frequency_slice, gain_map, to_db  # noqa: E402
from factories.config_factory import ConfigFactory  # noqa: E402
from harness.experiment import ExperimentRunner, angle_grid, run_experiment  # noqa: E402
from models.errors import ConfigError, InvalidInputError, JptaError  # noqa: E402
from models.models import SOLVER_NAMES, ExperimentConfig  # noqa: E402
from utils.data_utils import load_experiment_file  # noqa: E402
from utils.output_utils import (  # noqa: E402
    export_results,
    format_and_output_json,
    record_row,
    summarize,
    write_frequency_slice_csv,
    write_gain_map_csv,
)

log = logging.getLogger(__name__)

OUTPUT_ENV = "JPTA_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class JptaArgumentParser(argparse.ArgumentParser):
    """Erros de uso saem com código 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: erro: {message}\n")


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
        stream=sys.stderr,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", required=True, help="Arquivo de experimento (.json ou .toml)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="CHAVE=VALOR",
        help="Sobrescreve um campo do experimento (ex.: --set optimizer.zeta=1e-4); repetível",
    )
    common.add_argument("--out", help="Diretório de saída (sobrepõe output_dir e JPTA_OUTPUT_DIR)")
    common.add_argument("--verbose", "-v", action="store_true", help="Log em nível DEBUG")
    common.add_argument("--quiet", "-q", action="store_true", help="Somente avisos e erros")

    parser = JptaArgumentParser(
        description="JPTA - beamforming dependente de frequência com defasadores e atrasos verdadeiros",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=JptaArgumentParser)

    solve = sub.add_parser("solve", parents=[common], help="Resolve um cenário e grava a tabela de fase/atraso",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    solve.add_argument("--solver", required=True, choices=SOLVER_NAMES, help="Solver a executar")

    eval_map = sub.add_parser("eval-map", parents=[common], help="Mapa de ganho e corte em frequência",
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    eval_map.add_argument("--solver", required=True, choices=SOLVER_NAMES, help="Solver a executar")
    eval_map.add_argument("--az-step", type=float, default=None, help="Passo em azimute (graus); padrão do arquivo")
    eval_map.add_argument("--el-step", type=float, default=None, help="Passo em elevação (graus); padrão do arquivo")
    eval_map.add_argument("--el-slice", type=float, default=105.0, help="Elevação do corte em frequência (graus)")

    sweep = sub.add_parser("sweep", parents=[common], help="Roda todos os pontos e solvers do experimento",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sweep.add_argument("--resume", action="store_true",
                       help="Reaproveita as execuções concluídas da última sessão com a mesma configuração")

    compare = sub.add_parser("compare", parents=[common], help="Compara solvers ponto a ponto",
                             formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    compare.add_argument("--solvers", required=True, help="Lista separada por vírgulas, ex.: joint-ls,sep-ls")
    compare.add_argument("--resume", action="store_true",
                         help="Reaproveita as execuções concluídas da última sessão com a mesma configuração")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Arquivo + --set; depois JPTA_OUTPUT_DIR (.env incluído) e por fim --out."""
    config = load_experiment_file(args.config, list(args.overrides))
    load_dotenv()
    output_dir = args.out or os.getenv(OUTPUT_ENV)
    if output_dir:
        config = config.model_copy(update={"output_dir": output_dir})
    return config


def _single_point(config: ExperimentConfig, solver: str) -> ExperimentConfig:
    if config.sweep is not None:
        log.info("Varredura ignorada: usando apenas o cenário base")
    return config.model_copy(update={"solvers": [solver], "sweep": None})


def cmd_solve(args: argparse.Namespace) -> int:
    config = _single_point(resolve_config(args), args.solver)
    runner = ExperimentRunner(config)
    sid, scenario = ConfigFactory.scenario_points(config)[0]
    record, _ = runner.run_one(sid, scenario, args.solver)
    if not record.ok:
        format_and_output_json(record_row(record), status="Erro", message=record.error)
        return EXIT_RUNTIME

    row = record_row(record)
    row["table_file"] = record.table_file
    print(f"G_l = {record.gl_db:.3f} dB")
    for i, g in enumerate(record.metrics.per_user_gain_db):
        print(f"  usuário {i}: {g:.3f} dB")
    format_and_output_json(
        row,
        message=f"{args.solver} concluído, G_l = {record.gl_db:.3f} dB",
        output_file=str(runner.output_dir / f"solve_{args.solver}.json"),
    )
    return EXIT_OK


def cmd_eval_map(args: argparse.Namespace) -> int:
    config = _single_point(resolve_config(args), args.solver)
    az_step = args.az_step or config.map_az_step
    el_step = args.el_step or config.map_el_step
    az = angle_grid(*config.map_az_range, az_step)
    el = angle_grid(*config.map_el_range, el_step)
    if az.size < 2 or el.size < 2:
        raise UsageError(f"A grade precisa de pelo menos 2 pontos por eixo (az={az.size}, el={el.size})")

    runner = ExperimentRunner(config)
    sid, scenario = ConfigFactory.scenario_points(config)[0]
    record, beam_config = runner.run_one(sid, scenario, args.solver)
    if not record.ok:
        format_and_output_json(record_row(record), status="Erro", message=record.error)
        return EXIT_RUNTIME

    map_db = to_db(gain_map(runner.geometry, runner.grid, beam_config, az, el))
    map_file = write_gain_map_csv(map_db, az, el, runner.output_dir / f"gain_map_{args.solver}.csv")
    slice_db = to_db(frequency_slice(runner.geometry, runner.grid, beam_config, az, args.el_slice))
    slice_file = write_frequency_slice_csv(
        slice_db, az, runner.grid.frequencies, runner.output_dir / f"freq_slice_{args.solver}.csv"
    )
    peaks = [
        {"theta_az_deg": float(az[i]), "theta_el_deg": float(el[j]), "gain_db": float(map_db[i, j])}
        for i, j in find_peaks(map_db, scenario.n_users)
    ]
    format_and_output_json(
        {"gain_map_file": str(map_file), "freq_slice_file": str(slice_file), "peaks": peaks, **record_row(record)},
        message=f"Mapa {az.size}x{el.size} e corte em {args.el_slice} graus gravados",
    )
    return EXIT_OK


def _run_and_export(config: ExperimentConfig, resume: bool = False) -> dict:
    records = run_experiment(config, resume=resume)
    csv_path = export_results(records, config.output_dir, "csv")
    json_path = export_results(records, config.output_dir, "json")
    failed = [r for r in records if not r.ok]
    return {
        "records": records,
        "files": {"metrics_csv": str(csv_path), "metrics_json": str(json_path)},
        "failed": failed,
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    outcome = _run_and_export(config, args.resume)
    records = outcome["records"]
    format_and_output_json(
        {"files": outcome["files"], "summary": summarize(records)},
        status="Sucesso" if not outcome["failed"] else "Aviso",
        message=f"{len(records)} execução(ões), {len(outcome['failed'])} falha(s)",
    )
    return EXIT_RUNTIME if len(outcome["failed"]) == len(records) else EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    unknown = [s for s in solvers if s not in SOLVER_NAMES]
    if unknown or not solvers:
        raise UsageError(f"Solvers inválidos {unknown}; válidos: {', '.join(SOLVER_NAMES)}")
    config = resolve_config(args).model_copy(update={"solvers": solvers})
    outcome = _run_and_export(config, args.resume)
    summary = summarize(outcome["records"])

    print("\nG_l (dB) por cenário:")
    print("scenario_id".ljust(24) + "".join(s.rjust(16) for s in solvers))
    for sid, row in summary["matrix"].items():
        print(sid.ljust(24) + "".join(f"{row.get(s, float('nan')):16.3f}" for s in solvers))
    for pair, deltas in summary["deltas"].items():
        values = list(deltas.values())
        if values:
            print(f"{pair}: min {min(values):+.3f} dB, max {max(values):+.3f} dB")

    format_and_output_json(
        {"files": outcome["files"], "summary": summary},
        status="Sucesso" if not outcome["failed"] else "Aviso",
        message=f"Comparação de {len(solvers)} solvers concluída",
    )
    return EXIT_RUNTIME if len(outcome["failed"]) == len(outcome["records"]) else EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "eval-map": cmd_eval_map,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Função principal com interface de linha de comando"""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidInputError, UsageError) as e:
        log.error(f"Erro de configuração: {e}")
        format_and_output_json(None, status="Erro", message=str(e))
        return EXIT_USAGE
    except JptaError as e:
        log.error(f"💥 Falha durante a execução: {e}", exc_info=True)
        format_and_output_json(None, status="Erro", message=str(e))
        return EXIT_RUNTIME
    except Exception as e:
        log.error(f"💥 Erro inesperado: {e}", exc_info=True)
        format_and_output_json(None, status="Erro", message=f"Falha inesperada: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
