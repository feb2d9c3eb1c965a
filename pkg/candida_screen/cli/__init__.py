from candida_screen.cli import evaluation_commands, inference_commands, synth_commands, training_commands
from candida_screen.cli.common import CliParser, common_parent, model_parent

VERBS = ("synth", "pretrain-detect", "train-tile", "train-wsi", "infer", "cam", "eval", "ablate")


def build_parser() -> CliParser:
    """Parser com um subcomando por etapa do pipeline"""
    parser = CliParser(
        prog="candida_screen",
        description="Triagem de candida em lâminas inteiras: dados sintéticos, treino, inferência e avaliação",
    )
    subparsers = parser.add_subparsers(dest="verb", metavar="VERB", required=True)
    common = common_parent()
    model = model_parent()

    synth_commands.register(subparsers, [common])
    training_commands.register(subparsers, [common, model])
    inference_commands.register(subparsers, [common, model])
    evaluation_commands.register(subparsers, [common, model])
    return parser


__all__ = ["VERBS", "build_parser"]
