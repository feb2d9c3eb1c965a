import json
from pathlib import Path
from typing import Any, Union

from candida_screen.core.exceptions import DatasetError


class BaseRepository:
    """
    Repository base para artefatos em disco.

    Cada repository é ancorado em um diretório raiz; os métodos concretos
    definem o layout de arquivos dentro dele.
    """

    def __init__(self, root: Union[str, Path]):
        """
        Args:
            root: Diretório raiz do repository
        """
        self.root = Path(root)

    def path(self, *parts: str) -> Path:
        """Caminho de um arquivo dentro da raiz"""
        return self.root.joinpath(*parts)

    def ensure_dir(self, *parts: str) -> Path:
        """
        Cria (se necessário) um diretório dentro da raiz

        Raises:
            DatasetError: diretório não gravável
        """
        directory = self.path(*parts)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DatasetError(f"Não foi possível criar o diretório {directory}: {e}") from e
        return directory

    def write_json(self, relative: str, payload: Any, sort_keys: bool = False) -> Path:
        target = self.path(relative)
        self.ensure_dir(*Path(relative).parent.parts)
        target.write_text(json.dumps(payload, indent=2, sort_keys=sort_keys, ensure_ascii=False) + "\n", encoding="utf-8")
        return target

    def read_json(self, relative: str) -> Any:
        target = self.path(relative)
        if not target.is_file():
            raise DatasetError(f"Arquivo {target} não encontrado")
        return json.loads(target.read_text(encoding="utf-8"))
