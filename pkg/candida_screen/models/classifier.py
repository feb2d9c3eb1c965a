"""
Classificador de tiles: encoder + cabeça SSA (ou cabeça baseline GAP + FC).

A mesma FC classifica o CLS e, aplicada aos tokens espaciais, produz o mapa
de atenção (attention_fc é fc).
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from candida_screen.core.exceptions import ParameterError, ShapeError
from candida_screen.models.encoder import ENCODER_STRIDE, ResidualEncoder
from candida_screen.models.ssa import HighLevelTokenizer, LowLevelTokenizer, SSADecoder, TokenSequence
from candida_screen.schemas.synth_schema import CANDIDA_INDEX
from candida_screen.schemas.tile_schema import TileResult

N_CLASSES = 2


@dataclass
class TileOutput:
    """Saída de um lote: logits B×2, embedding B×d (pré-FC) e tokens com CLS"""
    logits: torch.Tensor
    embedding: torch.Tensor
    tokens: TokenSequence

    @property
    def probabilities(self) -> torch.Tensor:
        return torch.softmax(self.logits, dim=-1)


class TileClassifier(nn.Module):
    """
    Rede de classificação de tiles.

    Com ssa=True: C1 -> queries, C4 -> kv, decoder SSA, FC no CLS.
    Com ssa=False: média global de C4 + FC; os "tokens" são [GAP; células de C4].
    """

    def __init__(
        self,
        preset: str = "desk",
        tile_size: int = 128,
        ssa: bool = True,
        embed_dim: int = 128,
        depth: int = 2,
        heads: int = 4,
        query_grid: int = 16,
    ):
        super().__init__()
        if tile_size % ENCODER_STRIDE:
            raise ParameterError(f"tile_size {tile_size} deve ser múltiplo de {ENCODER_STRIDE}")
        self.encoder = ResidualEncoder(preset)
        self.tile_size = tile_size
        self.use_ssa = ssa
        widths = self.encoder.widths
        c1_size = tile_size // 4
        if ssa:
            if query_grid < 1 or c1_size % query_grid:
                raise ParameterError(f"query_grid {query_grid} deve dividir o lado de C1 ({c1_size})")
            self.patch = c1_size // query_grid
            self.tokenize_low = LowLevelTokenizer(widths[0], embed_dim, self.patch)
            self.tokenize_high = HighLevelTokenizer(widths[3], embed_dim)
            self.decoder = SSADecoder(embed_dim, depth, heads, (query_grid, query_grid))
            self.embed_dim = embed_dim
        else:
            self.embed_dim = widths[3]
        self.fc = nn.Linear(self.embed_dim, N_CLASSES)
        self._arch = dict(ssa=ssa, embed_dim=embed_dim, depth=depth, heads=heads, query_grid=query_grid)

    @property
    def attention_fc(self) -> nn.Linear:
        return self.fc

    @property
    def architecture(self) -> str:
        head = "gap"
        if self.use_ssa:
            s = self._arch
            head = f"ssa-d{s['embed_dim']}-l{s['depth']}-h{s['heads']}-g{s['query_grid']}"
        return f"tile-{head}-t{self.tile_size}-{self.encoder.architecture}"

    def forward_tokens(self, pixels: torch.Tensor) -> TokenSequence:
        features = self.encoder(pixels)
        if self.use_ssa:
            queries = self.tokenize_low(features.c1)
            kv = self.tokenize_high(features.c4)
            return self.decoder(queries, kv)
        cells = features.c4.flatten(2).transpose(1, 2)
        pooled = cells.mean(dim=1, keepdim=True)
        return TokenSequence(torch.cat([pooled, cells], dim=1), has_cls=True, grid=tuple(features.c4.shape[-2:]))

    def forward(self, pixels: torch.Tensor) -> TileOutput:
        tokens = self.forward_tokens(pixels)
        embedding = tokens.cls
        return TileOutput(logits=self.fc(embedding), embedding=embedding, tokens=tokens)


def classify(fc: nn.Linear, tokens: TokenSequence, tile_ids: Optional[Sequence[str]] = None) -> List[TileResult]:
    """
    Aplica a FC ao token CLS e converte cada amostra em TileResult.

    Raises:
        ShapeError: sequência sem CLS
    """
    if not tokens.has_cls:
        raise ShapeError("classify exige uma sequência com token CLS")
    embedding = tokens.cls
    logits = fc(embedding)
    return to_results(logits, embedding, tile_ids)


def to_results(logits: torch.Tensor, embedding: torch.Tensor, tile_ids: Optional[Sequence[str]] = None) -> List[TileResult]:
    logits = logits.detach().double().cpu().numpy()
    embedding = embedding.detach().float().cpu().numpy()
    ids = list(tile_ids) if tile_ids is not None else [None] * len(logits)
    return [TileResult.from_logits(l, e, tile_id=t) for l, e, t in zip(logits, embedding, ids)]


def candida_probability(logits: torch.Tensor) -> torch.Tensor:
    return F.softmax(logits, dim=-1)[..., CANDIDA_INDEX]
