import sys
from datetime import datetime, timezone
from typing import List, Optional

from candida_screen.cli import build_parser
from candida_screen.cli.common import config_echo, config_from_args, describe_version
from candida_screen.core.exception_handlers import EXIT_OK, handle_exception
from candida_screen.core.log import configure_logging, log_stage
from candida_screen.repositories.results_repository import ResultsRepository


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def dispatch(argv: Optional[List[str]] = None) -> int:
    """
    Executa um subcomando e retorna o código de saída.

    0 em sucesso, 1 para erro de uso ou de domínio, 2 para erro interno.
    Toda execução bem-sucedida grava run_manifest.json em --out.

    Example:
        dispatch(["synth", "--out", "data", "--tiles", "100", "--seed", "0"])
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = config_from_args(args)
        configure_logging(config.log_dir)
        started_at = _utc_now()

        with log_stage(args.verb, seed=config.seed, out=args.out):
            outputs = args.handler(args, config)

        ResultsRepository(args.out).write_run_manifest({
            "verb": args.verb,
            "argv": argv,
            "config": config_echo(config),
            "version": describe_version(),
            "started_at": started_at,
            "finished_at": _utc_now(),
            "outputs": outputs,
        })
        return EXIT_OK

    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except Exception as e:
        return handle_exception(e, parser.format_usage())


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
