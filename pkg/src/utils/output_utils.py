import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from beamforming.gain import as_joint
from models.errors import InvalidInputError, JptaError
from models.models import JptaConfig, QuantizationSpec, RunRecord, SeparatedJptaConfig
from utils.data_utils import load_json_data, save_json_data

log = logging.getLogger(__name__)

METRICS_COLUMNS = [
    "scenario_id",
    "solver",
    "n_users",
    "alphas",
    "per_user_gain_db",
    "gl_db",
    "wall_time_s",
    "converged",
]


def format_and_output_json(
    data: Optional[Any],
    status: str = "Sucesso",
    message: str = "Operação concluída.",
    output_file: Optional[str] = None,
) -> None:
    output_structure = {
        "status": status,
        "message": message,
        "results": data
    }

    try:
        json_output_string = json.dumps(output_structure, indent=4, ensure_ascii=False)
    except (TypeError, ValueError) as e:
        log.error(f"Erro ao serializar para JSON: {e}. Verifique os tipos de dados em 'results'.", exc_info=True)
        print(f'{{"status": "Erro", "message": "Falha ao serializar resultados para JSON: {e}", "results": null}}')
        return

    print("\n--- Saída JSON ---")
    print(json_output_string)
    print("------------------")

    if output_file:
        try:
            Path(output_file).parent.mkdir(parents=True, exist_ok=True)
            with open(output_file, 'w', encoding='utf-8') as f:
                f.write(json_output_string)
            log.info(f"Saída JSON salva com sucesso em '{output_file}'")
        except OSError as e:
            log.error(f"Erro ao salvar saída JSON em '{output_file}': {e}", exc_info=True)


def _join(values: Sequence[float]) -> str:
    return ";".join(repr(float(v)) for v in values)


def _split(text: Any) -> List[float]:
    if text is None or (isinstance(text, float) and np.isnan(text)) or text == "":
        return []
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(";")]


def record_row(record: RunRecord) -> Dict[str, Any]:
    """Linha da tabela de métricas; ganhos sempre em dB."""
    metrics = record.metrics
    return {
        "scenario_id": record.scenario_id,
        "solver": record.solver,
        "n_users": record.n_users,
        "alphas": list(record.alphas),
        "per_user_gain_db": metrics.per_user_gain_db if metrics is not None else [],
        "gl_db": metrics.log_mean_gain if metrics is not None else None,
        "wall_time_s": metrics.wall_time if metrics is not None else None,
        "converged": record.converged,
    }


def export_results(
    records: Sequence[RunRecord],
    output_dir: Union[str, Path],
    fmt: str = "csv",
    stem: str = "metrics",
) -> Path:
    """
    Grava a tabela de métricas em `<output_dir>/<stem>.csv` ou `.json`.

    Raises:
        InvalidInputError: lista vazia ou formato desconhecido
        JptaError: caminho sem permissão de escrita (a mensagem traz o caminho)
    """
    if not records:
        raise InvalidInputError("Nenhum registro para exportar")
    if fmt not in ("csv", "json"):
        raise InvalidInputError(f"Formato desconhecido: {fmt} (use csv ou json)")

    rows = [record_row(r) for r in records]
    path = Path(output_dir) / f"{stem}.{fmt}"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            frame = pd.DataFrame(rows, columns=METRICS_COLUMNS)
            frame["alphas"] = frame["alphas"].map(_join)
            frame["per_user_gain_db"] = frame["per_user_gain_db"].map(_join)
            frame.to_csv(path, index=False, float_format="%.12g")
        elif not save_json_data(rows, str(path)):
            raise OSError("falha ao gravar JSON")
    except OSError as e:
        raise JptaError(f"Não foi possível escrever '{path}': {e}") from e

    log.info(f"{len(rows)} registro(s) exportados em '{path}'")
    return path


def load_results(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Relê uma tabela de métricas (CSV ou JSON) com listas e tipos restaurados."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        rows = load_json_data(str(path))
        if rows is None:
            raise JptaError(f"Não foi possível ler '{path}'")
    else:
        try:
            frame = pd.read_csv(path, dtype={"scenario_id": str, "solver": str, "alphas": str, "per_user_gain_db": str})
        except (OSError, pd.errors.ParserError) as e:
            raise JptaError(f"Não foi possível ler '{path}': {e}") from e
        frame = frame.astype(object).where(frame.notna(), None)
        rows = frame.to_dict(orient="records")

    results = []
    for row in rows:
        results.append({
            "scenario_id": str(row["scenario_id"]),
            "solver": str(row["solver"]),
            "n_users": int(row["n_users"]),
            "alphas": _split(row["alphas"]),
            "per_user_gain_db": _split(row["per_user_gain_db"]),
            "gl_db": float(row["gl_db"]) if row["gl_db"] is not None else None,
            "wall_time_s": float(row["wall_time_s"]) if row["wall_time_s"] is not None else None,
            "converged": str(row["converged"]).lower() == "true",
        })
    return results


def write_phase_delay_table(
    config: Union[JptaConfig, SeparatedJptaConfig], spec: QuantizationSpec, path: Union[str, Path]
) -> Path:
    """Tabela por elemento: y, z, phase_rad, delay_ns, delay_steps (múltiplos de tau_step)."""
    joint = as_joint(config)
    n_az, n_el = joint.shape
    y, z = np.meshgrid(np.arange(n_az), np.arange(n_el), indexing="ij")
    frame = pd.DataFrame({
        "y": y.ravel(),
        "z": z.ravel(),
        "phase_rad": joint.phase.ravel(),
        "delay_ns": joint.delay.ravel() * 1e9,
        "delay_steps": np.floor(joint.delay.ravel() / spec.tau_step + 0.5).astype(int),
    })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g")
    log.info(f"Tabela de fase/atraso salva em '{path}'")
    return path


def write_gain_map_csv(
    map_db: np.ndarray, az_grid: Sequence[float], el_grid: Sequence[float], path: Union[str, Path]
) -> Path:
    """Mapa em formato longo: theta_az_deg, theta_el_deg, max_gain_db."""
    az, el = np.meshgrid(np.asarray(az_grid, dtype=float), np.asarray(el_grid, dtype=float), indexing="ij")
    frame = pd.DataFrame({
        "theta_az_deg": az.ravel(),
        "theta_el_deg": el.ravel(),
        "max_gain_db": np.asarray(map_db, dtype=float).ravel(),
    })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g")
    log.info(f"Mapa de ganho ({len(frame)} pontos) salvo em '{path}'")
    return path


def write_frequency_slice_csv(
    slice_db: np.ndarray, az_grid: Sequence[float], frequencies: np.ndarray, path: Union[str, Path]
) -> Path:
    """Corte azimute x subportadora: theta_az_deg, subcarrier, freq_hz, gain_db."""
    az = np.asarray(az_grid, dtype=float)
    freqs = np.asarray(frequencies, dtype=float)
    a, m = np.meshgrid(np.arange(az.size), np.arange(freqs.size), indexing="ij")
    frame = pd.DataFrame({
        "theta_az_deg": az[a.ravel()],
        "subcarrier": m.ravel(),
        "freq_hz": freqs[m.ravel()],
        "gain_db": np.asarray(slice_db, dtype=float).ravel(),
    })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g")
    log.info(f"Corte em frequência salvo em '{path}'")
    return path


def summarize(records: Sequence[RunRecord]) -> Dict[str, Any]:
    """
    Resumo para o subcomando compare.

    Returns:
        {"matrix": {scenario_id: {solver: G_l}}, "mean_gl_db": {solver: média},
         "mean_spread_db": {solver: média}, "deltas": {"a - b": {scenario_id: dB}}}
    """
    ok = [r for r in records if r.ok]
    if not ok:
        return {"matrix": {}, "mean_gl_db": {}, "mean_spread_db": {}, "deltas": {}}

    frame = pd.DataFrame([
        {"scenario_id": r.scenario_id, "solver": r.solver, "gl_db": r.gl_db, "spread_db": r.metrics.spread_db}
        for r in ok
    ])
    matrix = frame.pivot(index="scenario_id", columns="solver", values="gl_db").sort_index()
    solvers = list(dict.fromkeys(r.solver for r in ok))

    deltas = {}
    for i, first in enumerate(solvers):
        for second in solvers[i + 1:]:
            diff = (matrix[first] - matrix[second]).dropna()
            deltas[f"{first} - {second}"] = {k: float(v) for k, v in diff.items()}

    return {
        "matrix": {
            sid: {s: float(v) for s, v in row.items() if not np.isnan(v)}
            for sid, row in matrix.to_dict(orient="index").items()
        },
        "mean_gl_db": {s: float(v) for s, v in frame.groupby("solver")["gl_db"].mean().items()},
        "mean_spread_db": {s: float(v) for s, v in frame.groupby("solver")["spread_db"].mean().items()},
        "deltas": deltas,
    }
