"""
Artefatos de uma execução: logs de treino (CSV), métricas (JSON), vereditos e
manifesto da execução.
"""
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import pandas as pd

from candida_screen.core.exceptions import DatasetError
from candida_screen.repositories.base_repository import BaseRepository

VERDICT_COLUMNS = ["slide_id", "score", "pred", "label"]


class ResultsRepository(BaseRepository):
    """
    Repository do diretório de saída de uma execução (--out).
    """

    def write_table(self, name: str, rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> Path:
        """Grava uma tabela CSV com colunas fixas (vazia mantém o cabeçalho)"""
        self.ensure_dir()
        frame = pd.DataFrame(list(rows), columns=list(columns))
        target = self.path(name)
        frame.to_csv(target, index=False, lineterminator="\n")
        return target

    def read_table(self, name_or_path) -> pd.DataFrame:
        target = Path(name_or_path)
        if not target.is_absolute() and not target.is_file():
            target = self.path(str(name_or_path))
        if not target.is_file():
            raise DatasetError(f"Tabela {target} não encontrada")
        return pd.read_csv(target)

    def write_verdicts(self, rows: List[Dict[str, Any]]) -> Path:
        """Grava verdicts.csv (slide_id,score,pred,label); label vazio quando desconhecido"""
        frame = pd.DataFrame(rows, columns=VERDICT_COLUMNS)
        frame["pred"] = frame["pred"].astype("Int64")
        frame["label"] = frame["label"].astype("Int64")
        self.ensure_dir()
        target = self.path("verdicts.csv")
        frame.to_csv(target, index=False, lineterminator="\n")
        return target

    def write_metrics(self, payload: Dict[str, Any], name: str = "metrics.json") -> Path:
        return self.write_json(name, payload, sort_keys=True)

    def write_run_manifest(self, payload: Dict[str, Any]) -> Path:
        return self.write_json("run_manifest.json", payload, sort_keys=True)
