import logging
import sys
import time
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Iterator, Optional, Union

LOGGER_NAME = "candida_screen"

logger = logging.getLogger(LOGGER_NAME)
logger.setLevel(logging.INFO)


def configure_logging(log_dir: Union[str, Path, None] = "logs", level: int = logging.INFO) -> logging.Logger:
    """
    Configura o logger do pipeline para arquivo e console.

    Cria um arquivo diário no padrão app-YYYY-MM-DD.log dentro de log_dir e um
    handler para stdout. Chamadas repetidas não duplicam handlers.

    Args:
        log_dir: Diretório dos arquivos de log (None desativa o arquivo)
        level: Nível mínimo das mensagens

    Returns:
        logging.Logger: Logger raiz do pacote
    """
    logger.setLevel(level)

    # Evitar duplicação de handlers
    if logger.handlers:
        return logger

    formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")

    if log_dir is not None:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        today = datetime.now().strftime("%Y-%m-%d")
        file_handler = logging.FileHandler(log_path / f"app-{today}.log", encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    logger.propagate = False
    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Retorna um logger filho (candida_screen.<name>)"""
    return logger.getChild(name) if name else logger


@contextmanager
def log_stage(name: str, **details) -> Iterator[None]:
    """
    Registra início, fim e tempo de processamento de uma etapa do pipeline.

    Falhas são registradas em nível ERROR e relançadas.

    Example:
        with log_stage("train-tile", epochs=30):
            TileController.train(...)
    """
    extra = " ".join(f"{key}={value}" for key, value in details.items())
    logger.info(f"Stage: {name} started {extra}".rstrip())
    start_time = time.time()
    try:
        yield
    except Exception as e:
        process_time = time.time() - start_time
        logger.error(f"Stage: {name} failed | Error: {type(e).__name__}: {e} | ProcessTime: {process_time:.4f}s")
        raise
    process_time = time.time() - start_time
    logger.info(f"Stage: {name} finished | ProcessTime: {process_time:.4f}s")
