class ScreeningError(Exception):
    """
    Erro base do pipeline de triagem.

    Toda falha causada por entrada do usuário (parâmetros, arquivos, formatos)
    herda desta classe e é convertida em código de saída 1 pela CLI.
    """


class ParameterError(ScreeningError, ValueError):
    """Parâmetro fora do intervalo permitido"""


class ShapeError(ScreeningError, ValueError):
    """Dimensões incompatíveis entre arrays/tensores"""


class DegenerateBoxError(ParameterError):
    """Caixa delimitadora com área nula"""


class CheckpointError(ScreeningError):
    """
    Checkpoint incompatível com a arquitetura.

    A mensagem sempre lista os nomes problemáticos para facilitar o diagnóstico.
    """

    def __init__(self, message: str, names=None):
        self.names = sorted(names or [])
        if self.names:
            message = f"{message}: {', '.join(self.names)}"
        super().__init__(message)


class DatasetError(ScreeningError):
    """Dataset ausente, vazio ou inconsistente"""


class MetricError(ScreeningError, ValueError):
    """Métrica indefinida para o conjunto de rótulos fornecido"""


class UsageError(ScreeningError):
    """Uso incorreto da linha de comando"""
