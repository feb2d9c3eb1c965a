"""
Skip self-attention: features de nível baixo (C1) viram queries e features de
nível alto (C4) viram keys/values de um decoder transformer com token CLS.
"""
from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn as nn

from candida_screen.core.exceptions import ParameterError, ShapeError

FFN_RATIO = 2


@dataclass
class TokenSequence:
    """
    Lote de tokens B×N×d com layout (com ou sem CLS) e grade espacial.

    Com CLS, o token 0 é o CLS e N = 1 + g_h·g_w.
    """
    tokens: torch.Tensor
    has_cls: bool
    grid: Tuple[int, int]

    def __post_init__(self):
        if self.tokens.dim() != 3:
            raise ShapeError(f"tokens deve ser B×N×d, recebido {tuple(self.tokens.shape)}")
        expected = self.grid[0] * self.grid[1] + (1 if self.has_cls else 0)
        if self.tokens.shape[1] != expected:
            raise ShapeError(f"Esperados {expected} tokens para a grade {self.grid}, recebidos {self.tokens.shape[1]}")

    @property
    def dim(self) -> int:
        return self.tokens.shape[-1]

    @property
    def cls(self) -> torch.Tensor:
        if not self.has_cls:
            raise ShapeError("Sequência sem token CLS")
        return self.tokens[:, 0]

    @property
    def spatial(self) -> torch.Tensor:
        return self.tokens[:, 1:] if self.has_cls else self.tokens


def _flatten_grid(x: torch.Tensor) -> TokenSequence:
    # B×d×gh×gw -> B×(gh·gw)×d em ordem row-major
    return TokenSequence(x.flatten(2).transpose(1, 2), has_cls=False, grid=(x.shape[-2], x.shape[-1]))


class LowLevelTokenizer(nn.Module):
    """Projeção linear de blocos patch×patch não sobrepostos de C1"""

    def __init__(self, in_channels: int, embed_dim: int, patch: int):
        super().__init__()
        if patch < 1:
            raise ParameterError(f"patch deve ser >= 1, recebido {patch}")
        self.patch = patch
        self.proj = nn.Conv2d(in_channels, embed_dim, kernel_size=patch, stride=patch)

    def forward(self, c1: torch.Tensor) -> TokenSequence:
        height, width = c1.shape[-2:]
        if height % self.patch or width % self.patch:
            raise ShapeError(f"C1 {height}×{width} não é divisível pelo patch {self.patch}")
        return _flatten_grid(self.proj(c1))


class HighLevelTokenizer(nn.Module):
    """Projeção 1×1 de cada célula de C4"""

    def __init__(self, in_channels: int, embed_dim: int):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, embed_dim, kernel_size=1)

    def forward(self, c4: torch.Tensor) -> TokenSequence:
        return _flatten_grid(self.proj(c4))


class DecoderBlock(nn.Module):
    """Pre-norm: self-attention em [CLS; queries] -> cross-attention com kv -> FFN"""

    def __init__(self, embed_dim: int, heads: int):
        super().__init__()
        self.norm_self = nn.LayerNorm(embed_dim)
        self.self_attn = nn.MultiheadAttention(embed_dim, heads, batch_first=True)
        self.norm_cross = nn.LayerNorm(embed_dim)
        self.cross_attn = nn.MultiheadAttention(embed_dim, heads, batch_first=True)
        self.norm_ffn = nn.LayerNorm(embed_dim)
        self.ffn = nn.Sequential(
            nn.Linear(embed_dim, FFN_RATIO * embed_dim),
            nn.GELU(),
            nn.Linear(FFN_RATIO * embed_dim, embed_dim),
        )

    def forward(self, x: torch.Tensor, kv: torch.Tensor) -> torch.Tensor:
        h = self.norm_self(x)
        x = x + self.self_attn(h, h, h, need_weights=False)[0]
        h = self.norm_cross(x)
        x = x + self.cross_attn(h, kv, kv, need_weights=False)[0]
        return x + self.ffn(self.norm_ffn(x))


class SSADecoder(nn.Module):
    """
    Decoder de `depth` blocos. As queries recebem embeddings posicionais 2-D
    aprendidos (linha + coluna); kv não recebe posição nem normalização, de
    modo que a saída é invariante a permutações de kv.
    """

    def __init__(self, embed_dim: int, depth: int, heads: int, grid: Tuple[int, int]):
        super().__init__()
        if depth < 1:
            raise ParameterError(f"depth deve ser >= 1, recebido {depth}")
        if embed_dim % heads:
            raise ParameterError(f"embed_dim {embed_dim} não é divisível por {heads} cabeças")
        self.embed_dim = embed_dim
        self.grid = tuple(grid)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, embed_dim))
        self.row_embed = nn.Parameter(torch.zeros(grid[0], embed_dim))
        self.col_embed = nn.Parameter(torch.zeros(grid[1], embed_dim))
        self.blocks = nn.ModuleList([DecoderBlock(embed_dim, heads) for _ in range(depth)])
        self.norm = nn.LayerNorm(embed_dim)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        nn.init.trunc_normal_(self.row_embed, std=0.02)
        nn.init.trunc_normal_(self.col_embed, std=0.02)

    def position_embedding(self) -> torch.Tensor:
        rows, cols = self.grid
        return (self.row_embed[:, None, :] + self.col_embed[None, :, :]).reshape(rows * cols, self.embed_dim)

    def forward(self, queries: TokenSequence, kv: TokenSequence) -> TokenSequence:
        if queries.has_cls or kv.has_cls:
            raise ShapeError("queries e kv devem vir sem token CLS")
        if queries.dim != self.embed_dim or kv.dim != self.embed_dim:
            raise ShapeError(f"Dimensões {queries.dim}/{kv.dim} diferem de embed_dim {self.embed_dim}")
        if tuple(queries.grid) != self.grid:
            raise ShapeError(f"Grade de queries {queries.grid} difere de {self.grid}")
        batch = queries.tokens.shape[0]
        x = queries.tokens + self.position_embedding()
        x = torch.cat([self.cls_token.expand(batch, -1, -1), x], dim=1)
        for block in self.blocks:
            x = block(x, kv.tokens)
        return TokenSequence(self.norm(x), has_cls=True, grid=queries.grid)


def ssa_forward(decoder: SSADecoder, queries: TokenSequence, kv: TokenSequence) -> TokenSequence:
    """Aplica o decoder SSA; a saída mantém 1 + Nq tokens"""
    return decoder(queries, kv)
