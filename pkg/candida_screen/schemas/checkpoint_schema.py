from typing import Any, Dict, Literal

from pydantic import BaseModel, Field

CheckpointKind = Literal["encoder", "detector", "tile_classifier", "wsi_pipeline"]


class CheckpointMetadata(BaseModel):
    """
    Registro de metadados gravado junto aos arrays de um checkpoint.

    architecture identifica o esquema de nomes/formas dos parâmetros; dois
    checkpoints com o mesmo architecture são intercambiáveis.
    """
    kind: CheckpointKind
    architecture: str = Field(..., min_length=1)
    seed: int = 0
    config: Dict[str, Any] = Field(default_factory=dict)

    model_config = {
        "json_schema_extra": {
            "example": {
                "kind": "encoder",
                "architecture": "resnet-desk-w16.32.64.128-b2.2.2.2",
                "seed": 0,
                "config": {"preset": "desk"}
            }
        }
    }
