"""
Agregadores de lâmina sobre a seleção top-k: transformer (padrão) e MLP.
"""
from typing import Tuple

import numpy as np
import torch
import torch.nn as nn

from candida_screen.core.exceptions import ParameterError, ShapeError
from candida_screen.schemas.synth_schema import CANDIDA_INDEX
from candida_screen.schemas.wsi_schema import TopKSelection, Verdict

MLP_HIDDEN = 64


def selection_tensors(selections, device=None) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Empilha seleções top-k em (scores B×k, embeddings B×k×d, padding B×k)"""
    if isinstance(selections, TopKSelection):
        selections = [selections]
    scores = torch.as_tensor(np.stack([s.scores for s in selections]), dtype=torch.float32, device=device)
    embeddings = torch.as_tensor(np.stack([s.embeddings for s in selections]), dtype=torch.float32, device=device)
    padding = torch.as_tensor(np.stack([s.padding for s in selections]), dtype=torch.bool, device=device)
    return scores, embeddings, padding


class TopKTransformer(nn.Module):
    """
    Tokens = Linear(embedding) + posição por rank + embedding escalar do score;
    CLS + encoder transformer com máscara de padding; FC -> 2 logits.
    """

    def __init__(self, in_dim: int, k: int = 10, embed_dim: int = 128, depth: int = 2, heads: int = 4):
        super().__init__()
        if embed_dim % heads:
            raise ParameterError(f"embed_dim {embed_dim} não é divisível por {heads} cabeças")
        self.k = k
        self.in_dim = in_dim
        self.embed_dim = embed_dim
        self.depth = depth
        self.heads = heads
        self.token_proj = nn.Linear(in_dim, embed_dim)
        self.score_proj = nn.Linear(1, embed_dim)
        self.rank_embed = nn.Parameter(torch.zeros(k, embed_dim))
        self.cls_token = nn.Parameter(torch.zeros(1, 1, embed_dim))
        layer = nn.TransformerEncoderLayer(
            embed_dim, heads, dim_feedforward=2 * embed_dim, dropout=0.0, batch_first=True, norm_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, depth, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(embed_dim)
        self.fc = nn.Linear(embed_dim, 2)
        nn.init.trunc_normal_(self.rank_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)

    @property
    def architecture(self) -> str:
        return f"topk-transformer-k{self.k}-in{self.in_dim}-d{self.embed_dim}-l{self.depth}-h{self.heads}"

    def forward(self, scores: torch.Tensor, embeddings: torch.Tensor, padding: torch.Tensor) -> torch.Tensor:
        if scores.shape[-1] != self.k or embeddings.shape[1] != self.k:
            raise ShapeError(f"Seleção deve ter comprimento {self.k}, recebido {scores.shape[-1]}")
        if bool(padding.all(dim=1).any()):
            raise ShapeError("Seleção composta apenas de preenchimento")
        batch = scores.shape[0]
        tokens = self.token_proj(embeddings) + self.rank_embed + self.score_proj(scores.unsqueeze(-1))
        tokens = torch.cat([self.cls_token.expand(batch, -1, -1), tokens], dim=1)
        mask = torch.cat([torch.zeros(batch, 1, dtype=torch.bool, device=padding.device), padding], dim=1)
        out = self.encoder(tokens, src_key_padding_mask=mask)
        return self.fc(self.norm(out[:, 0]))


class MLPAggregator(nn.Module):
    """Concatena os k embeddings + scores e aplica um perceptron de 2 camadas"""

    def __init__(self, in_dim: int, k: int = 10, hidden: int = MLP_HIDDEN):
        super().__init__()
        self.k = k
        self.in_dim = in_dim
        self.net = nn.Sequential(nn.Linear(k * (in_dim + 1), hidden), nn.ReLU(), nn.Linear(hidden, 2))

    @property
    def architecture(self) -> str:
        return f"topk-mlp-k{self.k}-in{self.in_dim}-h{self.net[0].out_features}"

    def forward(self, scores: torch.Tensor, embeddings: torch.Tensor, padding: torch.Tensor) -> torch.Tensor:
        if scores.shape[-1] != self.k or embeddings.shape[1] != self.k:
            raise ShapeError(f"Seleção deve ter comprimento {self.k}, recebido {scores.shape[-1]}")
        features = torch.cat([embeddings, scores.unsqueeze(-1)], dim=-1)
        return self.net(features.flatten(1))


def verdict_from_logits(logits: torch.Tensor) -> Verdict:
    score = float(torch.softmax(logits.detach().double(), dim=-1)[CANDIDA_INDEX])
    return Verdict(score=score, pred=int(score >= 0.5))


def aggregate(model: nn.Module, selection: TopKSelection) -> Tuple[Verdict, torch.Tensor]:
    """Veredito de uma lâmina (modelo em modo de inferência) e seus 2 logits"""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            logits = model(*selection_tensors(selection))[0]
    finally:
        model.train(was_training)
    return verdict_from_logits(logits), logits
