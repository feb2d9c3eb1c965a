from candida_screen.core.config import RunConfig, default_config
from candida_screen.core.log import configure_logging, get_logger, log_stage

__all__ = ["RunConfig", "default_config", "configure_logging", "get_logger", "log_stage"]
