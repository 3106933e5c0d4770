"""
core/errors.py
--------------
Hierarquia de exceções do laboratório.

Todas derivam de LabError para que a CLI e a API possam capturar
erros do domínio sem engolir falhas inesperadas do Python.
Cada classe também herda da exceção builtin mais próxima (ValueError,
RuntimeError...), assim código que já trata essas continua funcionando.
"""


class LabError(Exception):
    """Raiz de todos os erros do laboratório."""


class DimensionError(LabError, ValueError):
    """Formatos (shapes) incompatíveis entre operandos."""


class NumericError(LabError, ArithmeticError):
    """Valor NaN/Inf detectado em uma operação."""


class ParameterError(LabError, ValueError):
    """Argumento fora do domínio permitido."""


class DegenerateInputError(ParameterError):
    """Entrada degenerada (ex.: normalização com denominador ~0)."""

    def __init__(self, message: str, stats=None):
        super().__init__(message)
        # resultado parcial, quando existir (ex.: viés absoluto)
        self.stats = stats


class EmptySequenceError(ParameterError):
    """Sequência de tokens vazia."""


class ContractError(LabError, ValueError):
    """Chamada viola o contrato da operação."""


class StateError(LabError, RuntimeError):
    """Operação inválida para o estado atual do objeto."""


class ConfigError(LabError, ValueError):
    """Arquivo de configuração de execução inválido."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"linha {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class AlignmentError(LabError, ValueError):
    """Execuções com cadência de avaliação diferente não podem ser alinhadas."""

    def __init__(self, message: str, runs: list[str]):
        self.runs = runs
        super().__init__(f"{message}: {', '.join(runs)}")
