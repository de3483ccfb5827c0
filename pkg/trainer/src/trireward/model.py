"""Tri-head attention reward model.

A shared token encoder feeds three parallel additive-attention heads, one
per label dimension; each head pools the token states under its own
attention weights and projects the pooled vector to a scalar raw score.
Heads share nothing past the encoder, so zeroing one head's parameters
can only move that head's dimension.

Scoring-head biases start at zero and never receive gradient: the pairwise
ranking loss is invariant to a per-dimension constant shift. The bias is
instead the dimension's calibrated intercept — training sets it so the
zero point (logistic 0.5 on the wire) falls between the two classes.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .tokenizer import VOCAB_SIZE

DIMENSIONS = ("relevance", "logic", "attribute")

EMBED_DIM = 64
ATTN_DIM = 32


class TriHeadRewardModel(nn.Module):
    def __init__(
        self,
        vocab_size: int = VOCAB_SIZE,
        embed_dim: int = EMBED_DIM,
        attn_dim: int = ATTN_DIM,
    ):
        super().__init__()
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.attn_dim = attn_dim
        self.embedding = nn.Embedding(vocab_size, embed_dim)
        self.encoder = nn.Linear(embed_dim, embed_dim)
        self.head_projections = nn.ModuleList(
            nn.Linear(embed_dim, attn_dim) for _ in DIMENSIONS
        )
        self.head_queries = nn.ParameterList(
            nn.Parameter(torch.randn(attn_dim) / math.sqrt(attn_dim)) for _ in DIMENSIONS
        )
        self.scoring_heads = nn.ModuleList(nn.Linear(embed_dim, 1) for _ in DIMENSIONS)
        for head in self.scoring_heads:
            nn.init.zeros_(head.bias)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """(B, T) token ids + (B, T) validity mask -> (B, 3) raw scores."""
        if not mask.any(dim=-1).all():
            raise ValueError("every example needs at least one valid token")
        states = torch.tanh(self.encoder(self.embedding(ids)))  # (B, T, D)
        scores = []
        for head_index in range(len(DIMENSIONS)):
            keys = torch.tanh(self.head_projections[head_index](states))  # (B, T, A)
            energy = keys @ self.head_queries[head_index]  # (B, T)
            energy = energy.masked_fill(~mask, float("-inf"))
            weights = torch.softmax(energy, dim=-1)  # (B, T)
            pooled = (weights.unsqueeze(-1) * states).sum(dim=1)  # (B, D)
            scores.append(self.scoring_heads[head_index](pooled).squeeze(-1))
        stacked = torch.stack(scores, dim=-1)  # (B, 3)
        if not torch.isfinite(stacked).all():
            raise FloatingPointError("non-finite reward scores")
        return stacked

    def head_parameters(self, head_index: int):
        yield from self.head_projections[head_index].parameters()
        yield self.head_queries[head_index]
        yield from self.scoring_heads[head_index].parameters()

    def save(self, path) -> None:
        torch.save(
            {
                "vocab_size": self.vocab_size,
                "embed_dim": self.embed_dim,
                "attn_dim": self.attn_dim,
                "state_dict": self.state_dict(),
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "TriHeadRewardModel":
        payload = torch.load(path, map_location="cpu", weights_only=True)
        model = cls(
            vocab_size=payload["vocab_size"],
            embed_dim=payload["embed_dim"],
            attn_dim=payload["attn_dim"],
        )
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model
