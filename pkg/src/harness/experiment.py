import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from beamforming.gain import evaluate, gain_map, to_db
from factories.config_factory import ConfigFactory
from models.models import ExperimentConfig, RunRecord, UserScenario
from utils.output_utils import write_gain_map_csv, write_phase_delay_table

log = logging.getLogger(__name__)

# Campos que não mudam os resultados e ficam fora do digest.
_DIGEST_EXCLUDE = {"output_dir", "workers"}


def config_digest(config: ExperimentConfig) -> str:
    """sha256 do experimento resolvido, com chaves ordenadas."""
    payload = config.model_dump(mode="json", exclude=_DIGEST_EXCLUDE)
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def angle_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Grade [lo, hi] com passo `step`, extremos incluídos."""
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + np.arange(count) * step


class RunStore:
    """Persiste progresso e registros em `<output_dir>/runs/` a cada execução concluída."""

    def __init__(self, output_dir: Union[str, Path]):
        self.runs_dir = Path(output_dir) / "runs"
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        self.session_id = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.progress_file = self.runs_dir / f"progress_{self.session_id}.json"
        self.results_file = self.runs_dir / f"results_{self.session_id}.json"
        self._lock = threading.Lock()

    def save_progress(self, records: List[RunRecord], total: int) -> None:
        """Salva progresso atual"""
        failed = [f"{r.scenario_id}/{r.solver}" for r in records if not r.ok]
        progress_data = {
            "session_id": self.session_id,
            "timestamp": datetime.now().isoformat(),
            "completed_runs": len(records),
            "total_runs": total,
            "failed_runs": failed,
        }
        with self._lock:
            try:
                with open(self.progress_file, 'w', encoding='utf-8') as f:
                    json.dump(progress_data, f, indent=2, ensure_ascii=False)
                with open(self.results_file, 'w', encoding='utf-8') as f:
                    json.dump([r.model_dump(mode="json") for r in records], f, indent=2, ensure_ascii=False)
                log.debug(f"Progresso salvo: {len(records)}/{total} execuções, {len(failed)} falharam")
            except OSError as e:
                log.error(f"Erro ao salvar progresso: {e}")

    def load_progress(self) -> Optional[Dict[str, Any]]:
        """Carrega o progresso mais recente, com os registros em `records`."""
        progress_files = list(self.runs_dir.glob("progress_*.json"))
        if not progress_files:
            return None
        latest_file = max(progress_files, key=lambda x: x.stat().st_mtime)
        try:
            with open(latest_file, 'r', encoding='utf-8') as f:
                progress_data = json.load(f)
            results_file = self.runs_dir / f"results_{progress_data['session_id']}.json"
            if results_file.exists():
                with open(results_file, 'r', encoding='utf-8') as f:
                    progress_data["records"] = [RunRecord.model_validate(r) for r in json.load(f)]
            log.info(f"Progresso carregado da sessão {progress_data['session_id']}")
            return progress_data
        except (OSError, ValueError, KeyError) as e:
            log.error(f"Erro ao carregar progresso: {e}")
            return None

    def create_final_backup(self, final_results: Dict[str, Any]) -> Path:
        backup_file = self.runs_dir / f"final_results_{self.session_id}.json"
        with self._lock:
            try:
                with open(backup_file, 'w', encoding='utf-8') as f:
                    json.dump(final_results, f, indent=2, ensure_ascii=False)
                log.info(f"Snapshot final salvo em: {backup_file}")
            except OSError as e:
                log.error(f"Erro ao criar snapshot final: {e}")
        return backup_file


class ExperimentRunner:
    """Executa todos os pares (cenário, solver) de um experimento, isolando falhas por execução."""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None):
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.geometry = config.geometry
        self.grid = config.grid
        self.digest = config_digest(config)
        self.store = RunStore(self.output_dir)

    def _export_artifacts(self, scenario_id: str, solver: str, beam_config) -> Tuple[str, Optional[str]]:
        tag = f"{scenario_id}_{solver}"
        table = write_phase_delay_table(
            beam_config, self.config.quantization, self.output_dir / "tables" / f"phase_delay_{tag}.csv"
        )
        map_file = None
        if self.config.export_maps:
            cfg = self.config
            az = angle_grid(*cfg.map_az_range, cfg.map_az_step)
            el = angle_grid(*cfg.map_el_range, cfg.map_el_step)
            map_db = to_db(gain_map(self.geometry, self.grid, beam_config, az, el))
            map_file = str(write_gain_map_csv(map_db, az, el, self.output_dir / "maps" / f"gain_map_{tag}.csv"))
        return str(table), map_file

    def run_one(self, scenario_id: str, scenario: UserScenario, solver: str) -> Tuple[RunRecord, Any]:
        """Roda um solver num cenário. Devolve (registro, configuração ou None em caso de falha)."""
        base = {
            "scenario_id": scenario_id,
            "config_digest": self.digest,
            "solver": solver,
            "n_users": scenario.n_users,
            "alphas": scenario.alphas,
            "subband_sizes": tuple(scenario.sizes),
            "timestamp": datetime.now().isoformat(),
        }
        try:
            solve = ConfigFactory.solver(solver)
            start = time.perf_counter()
            beam_config, trace = solve(
                self.geometry,
                self.grid,
                scenario,
                self.config.quantization,
                self.config.optimizer,
                self.config.quantize_analytic,
            )
            wall_time = time.perf_counter() - start
            metrics = evaluate(self.geometry, self.grid, scenario, beam_config, solver, wall_time)
            table_file, map_file = self._export_artifacts(scenario_id, solver, beam_config)
            converged = trace.converged if trace is not None else True
            log.info(f"✅ {scenario_id}/{solver}: G_l = {metrics.log_mean_gain:.3f} dB em {wall_time:.2f} s")
            record = RunRecord(
                **base, metrics=metrics, converged=converged, table_file=table_file, gain_map_file=map_file
            )
            return record, beam_config
        except Exception as e:
            log.error(f"❌ {scenario_id}/{solver} falhou: {e}", exc_info=True)
            return RunRecord(**base, converged=False, error=f"{type(e).__name__}: {e}"), None

    def _resumable_records(self) -> List[RunRecord]:
        """Registros bem-sucedidos da sessão anterior com o mesmo digest de configuração."""
        previous = self.store.load_progress()
        if not previous:
            return []
        kept = [r for r in previous.get("records", []) if r.ok and r.config_digest == self.digest]
        log.info(f"Resumindo experimento: {len(kept)} execução(ões) reaproveitadas da sessão {previous['session_id']}")
        return kept

    def run(self, resume: bool = False) -> List[RunRecord]:
        points = ConfigFactory.scenario_points(self.config)
        tasks = [(sid, scenario, solver) for sid, scenario in points for solver in self.config.solvers]
        records: List[RunRecord] = []
        if resume:
            wanted = {(sid, solver) for sid, _, solver in tasks}
            records = [r for r in self._resumable_records() if (r.scenario_id, r.solver) in wanted]
            done = {(r.scenario_id, r.solver) for r in records}
            tasks = [task for task in tasks if (task[0], task[2]) not in done]
        total = len(records) + len(tasks)
        log.info(
            f"Experimento '{self.config.name}': {len(points)} cenário(s) x {len(self.config.solvers)} solver(s) "
            f"com {self.config.workers} worker(s), {len(tasks)} execução(ões) pendente(s)"
        )

        progress = tqdm(total=total, initial=len(records), desc=self.config.name, unit="execução",
                        disable=not self.config.optimizer.show_progress)
        try:
            if self.config.workers == 1:
                for task in tasks:
                    records.append(self.run_one(*task)[0])
                    self.store.save_progress(records, total)
                    progress.update(1)
            else:
                with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                    futures = [pool.submit(self.run_one, *task) for task in tasks]
                    for future in as_completed(futures):
                        records.append(future.result()[0])
                        self.store.save_progress(records, total)
                        progress.update(1)
        finally:
            progress.close()

        records.sort(key=lambda r: (r.scenario_id, r.solver))
        failed = [r for r in records if not r.ok]
        self.store.save_progress(records, total)
        self.store.create_final_backup({
            "session": {
                "session_id": self.store.session_id,
                "completed_at": datetime.now().isoformat(),
                "config_digest": self.digest,
                "total_runs": len(records),
                "total_failed": len(failed),
            },
            "config": self.config.model_dump(mode="json"),
            "records": [r.model_dump(mode="json") for r in records],
        })
        if failed:
            log.warning(f"{len(failed)} de {len(records)} execução(ões) falharam")
        return records


def run_experiment(
    config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None, resume: bool = False
) -> List[RunRecord]:
    """Uma execução por (ponto de cenário x solver), ordenadas por scenario_id e solver.

    Com `resume`, reaproveita os registros bem-sucedidos da última sessão com o mesmo digest.
    """
    return ExperimentRunner(config, output_dir).run(resume=resume)
