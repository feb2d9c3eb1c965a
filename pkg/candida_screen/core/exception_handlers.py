import sys
import traceback

from candida_screen.core.exceptions import ScreeningError, UsageError
from candida_screen.core.log import logger

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2


def handle_exception(exc: BaseException, usage: str = "") -> int:
    """
    Converte uma exceção em código de saída da CLI.

    - UsageError: imprime o texto de uso, saída 1
    - ScreeningError: mensagem curta em stderr, saída 1
    - qualquer outra: traceback no log, saída 2

    Args:
        exc: Exceção capturada no dispatch
        usage: Texto de uso do parser

    Returns:
        int: Código de saída
    """
    if isinstance(exc, UsageError):
        if usage:
            print(usage, file=sys.stderr)
        print(f"erro: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR

    if isinstance(exc, ScreeningError):
        print(f"erro: {exc}", file=sys.stderr)
        logger.error(f"{type(exc).__name__}: {exc}")
        return EXIT_USER_ERROR

    logger.error("Erro interno:\n" + "".join(traceback.format_exception(type(exc), exc, exc.__traceback__)))
    print(f"erro interno: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_INTERNAL_ERROR
