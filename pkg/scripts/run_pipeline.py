"""
Executa o pipeline completo em dados sintéticos, na ordem:
synth -> pretrain-detect -> train-tile -> train-wsi -> infer -> eval -> cam.

Uso:
    python scripts/run_pipeline.py --data data --runs runs --seed 0
"""
import argparse
import sys
from pathlib import Path

import pandas as pd

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from candida_screen.main import dispatch  # noqa: E402
from candida_screen.repositories.dataset_repository import DatasetRepository  # noqa: E402


def _step(number: int, title: str, argv) -> None:
    print("\n" + "=" * 50)
    print(f"Passo {number}: {title}")
    print("=" * 50)
    code = dispatch([str(a) for a in argv])
    if code != 0:
        print(f"❌ Passo {number} falhou (código {code})")
        sys.exit(code)


def _write_labels(data: Path, target: Path) -> Path:
    manifests = DatasetRepository(data).list_manifests()
    frame = pd.DataFrame({"slide_id": [m.slide_id for m in manifests],
                          "label": [m.slide_label.index for m in manifests]})
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, lineterminator="\n")
    return target


def main():
    parser = argparse.ArgumentParser(description="Pipeline sintético ponta a ponta")
    parser.add_argument("--data", type=Path, default=Path("data"))
    parser.add_argument("--runs", type=Path, default=Path("runs"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--preset", default="toy")
    args = parser.parse_args()

    data, runs, seed = args.data, args.runs, args.seed
    common = ["--seed", seed, "--preset", args.preset]

    _step(1, "Geração do dataset sintético",
          ["synth", "--out", data, "--tiles", 500, "--slides", 60, "--tiles-per-slide", 20, "--seed", seed])
    _step(2, "Pré-treino por detecção", ["pretrain-detect", "--data", data, "--out", runs / "detect", *common])
    _step(3, "Classificador de tiles",
          ["train-tile", "--data", data, "--ckpt", runs / "detect" / "encoder.ckpt", "--out", runs / "tile", *common])
    _step(4, "Agregador de lâmina",
          ["train-wsi", "--data", data, "--ckpt", runs / "tile" / "tile.ckpt", "--out", runs / "wsi", *common])

    slides = sorted((data / DatasetRepository.SLIDES_DIR).glob("*.json"))
    infer = ["infer", "--ckpt", runs / "wsi" / "wsi.ckpt", "--out", runs / "infer", "--seed", seed]
    for slide in slides:
        infer += ["--slide", slide]
    _step(5, "Inferência por lâmina", infer)

    labels = _write_labels(data, runs / "eval" / "labels.csv")
    _step(6, "Avaliação", ["eval", "--pred", runs / "infer" / "verdicts.csv", "--truth", labels, "--out", runs / "eval"])
    _step(7, "Mapas Grad-CAM", ["cam", "--ckpt", runs / "tile" / "tile.ckpt", "--data", data, "--out", runs / "cam"])

    print("\n" + "=" * 50)
    print("✅ Pipeline concluído com sucesso!")
    print("=" * 50)


if __name__ == "__main__":
    main()
