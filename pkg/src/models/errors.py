"""Exceções e avisos do projeto."""
from typing import Any, Optional


class JptaError(Exception):
    """Erro base de todo o pacote."""


class InvalidInputError(JptaError, ValueError):
    """Entrada rejeitada (índices, dimensões, subbandas vazias, ganhos não positivos)."""


class DegenerateConfigurationError(JptaError):
    """Feixe numericamente colapsado: algum ganho médio <= 0."""


class SolverError(JptaError):
    """Falha de um otimizador; carrega o trace parcial para diagnóstico."""

    def __init__(self, message: str, trace: Optional[Any] = None):
        super().__init__(message)
        self.trace = trace


class ConfigError(JptaError):
    """Arquivo de experimento ou override inválido. `field` nomeia a chave culpada."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DelayRangeWarning(UserWarning):
    """Atrasos fora de [0, tau_max]."""
