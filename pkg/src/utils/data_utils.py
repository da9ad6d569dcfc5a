# utils/data_utils.py

import json
import os
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args

from pydantic import ValidationError

from models.errors import ConfigError
from models.models import ExperimentConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


def _check_file(file_path: str) -> Optional[str]:
    """Valida o caminho e devolve a versão sem espaços, ou None se não for utilizável."""
    if not file_path or not isinstance(file_path, str) or file_path.strip() == '':
        log.warning("Caminho de arquivo vazio ou inválido")
        return None

    file_path = file_path.strip()

    if not os.path.exists(file_path):
        log.error(f"Arquivo não encontrado em '{file_path}'")
        return None

    if not os.path.isfile(file_path):
        log.error(f"'{file_path}' não é um arquivo")
        return None

    try:
        if os.path.getsize(file_path) == 0:
            log.warning(f"Arquivo vazio: '{file_path}'")
            return None
    except OSError as e:
        log.error(f"Erro ao obter tamanho do arquivo '{file_path}': {e}")
        return None

    return file_path


def load_json_data(file_path: str) -> Optional[Any]:
    """
    Carrega dados de arquivo JSON com tratamento robusto de erros

    Args:
        file_path: Caminho do arquivo JSON

    Returns:
        Dados carregados ou None se houver erro
    """
    file_path = _check_file(file_path)
    if file_path is None:
        return None

    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = json.load(f)

        if data is None:
            log.warning(f"Arquivo JSON contém apenas null: '{file_path}'")
            return None

        log.info(f"Dados JSON carregados com sucesso de '{file_path}'")
        return data

    except json.JSONDecodeError as e:
        log.error(f"Erro de decodificação JSON no arquivo '{file_path}': {e}")
        log.debug(f"Linha {e.lineno}, coluna {e.colno}: {e.msg}")
        return None

    except (IOError, UnicodeDecodeError) as e:
        log.error(f"Erro de I/O ao ler o arquivo JSON '{file_path}': {e}", exc_info=True)
        return None


def load_toml_data(file_path: str) -> Optional[Dict[str, Any]]:
    """Carrega um arquivo TOML; None se não existir ou for inválido."""
    file_path = _check_file(file_path)
    if file_path is None:
        return None

    try:
        with open(file_path, 'rb') as f:
            data = tomllib.load(f)
        log.info(f"Dados TOML carregados com sucesso de '{file_path}'")
        return data
    except tomllib.TOMLDecodeError as e:
        log.error(f"Erro de decodificação TOML no arquivo '{file_path}': {e}")
        return None
    except IOError as e:
        log.error(f"Erro de I/O ao ler o arquivo TOML '{file_path}': {e}", exc_info=True)
        return None


def save_json_data(data: Union[Dict[str, Any], List[Any]], file_path: str,
                   indent: int = 2, ensure_ascii: bool = False) -> bool:
    """
    Salva dados em arquivo JSON

    Args:
        data: Dados para salvar
        file_path: Caminho do arquivo de destino
        indent: Indentação (None para compacto)
        ensure_ascii: Se False, permite caracteres Unicode

    Returns:
        True se salvou com sucesso, False caso contrário
    """
    if not file_path or not isinstance(file_path, str) or file_path.strip() == '':
        log.error("Caminho de arquivo vazio fornecido para save_json_data")
        return False

    file_path = file_path.strip()

    try:
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=indent, ensure_ascii=ensure_ascii)

        log.debug(f"JSON salvo em '{file_path}' ({os.path.getsize(file_path)} bytes)")
        return True

    except (OSError, TypeError) as e:
        log.error(f"Erro ao salvar JSON em '{file_path}': {e}", exc_info=True)
        return False


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _nested_model(annotation) -> Optional[Any]:
    if hasattr(annotation, "model_fields"):
        return annotation
    for arg in get_args(annotation):
        if hasattr(arg, "model_fields"):
            return arg
    return None


def apply_overrides(data: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """
    Aplica overrides `chave.pontilhada=valor` sobre o dicionário bruto do experimento.

    O valor é lido como JSON quando possível (números, listas, booleanos), senão fica como
    string. Chaves desconhecidas geram ConfigError com o nome da chave.
    """
    result = json.loads(json.dumps(data))
    nested_models = {
        name: _nested_model(field.annotation) for name, field in ExperimentConfig.model_fields.items()
    }

    for item in overrides:
        if '=' not in item:
            raise ConfigError(f"Override sem '=': '{item}' (use chave=valor)", field=item)
        key, raw = item.split('=', 1)
        key = key.strip()
        parts = key.split('.')

        if parts[0] not in ExperimentConfig.model_fields:
            raise ConfigError(f"Chave desconhecida: '{key}'", field=key)
        if len(parts) > 2:
            raise ConfigError(f"Chave aninhada demais: '{key}'", field=key)
        if len(parts) == 2:
            model_cls = nested_models.get(parts[0])
            if model_cls is None or parts[1] not in model_cls.model_fields:
                raise ConfigError(f"Chave desconhecida: '{key}'", field=key)
            section = result.setdefault(parts[0], {}) or {}
            section[parts[1]] = _parse_value(raw)
            result[parts[0]] = section
        else:
            result[key] = _parse_value(raw)
        log.debug(f"Override aplicado: {key} = {raw}")

    return result


def load_experiment_file(file_path: Union[str, Path], overrides: Optional[List[str]] = None) -> ExperimentConfig:
    """
    Lê um experimento em JSON ou TOML, aplica overrides e valida.

    Raises:
        ConfigError: arquivo ausente, ilegível ou com campo inválido
    """
    file_path = str(file_path)
    suffix = Path(file_path).suffix.lower()
    if suffix == '.toml':
        data = load_toml_data(file_path)
    elif suffix == '.json':
        data = load_json_data(file_path)
    else:
        raise ConfigError(f"Formato de configuração não suportado: '{file_path}' (use .json ou .toml)")

    if data is None:
        raise ConfigError(f"Não foi possível ler a configuração '{file_path}'")
    if not isinstance(data, dict):
        raise ConfigError(f"Configuração '{file_path}' deve ser um objeto chave-valor")

    data = apply_overrides(data, overrides or [])

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = '.'.join(str(p) for p in first['loc']) or None
        raise ConfigError(f"Campo inválido '{field}': {first['msg']}", field=field) from e
