"""Hash tokenizer: words to fixed-vocabulary ids, no fitted state.

md5 keeps the mapping stable across processes and platforms (the builtin
hash() is salted per process), so a checkpoint scores identical text
identically wherever it is loaded.
"""

from __future__ import annotations

import hashlib
import re

import torch

VOCAB_SIZE = 1024
MAX_TOKENS = 128

_TOKEN_RE = re.compile(r"[a-z0-9_]+|[^\sa-z0-9_]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def token_id(token: str) -> int:
    digest = hashlib.md5(token.encode("utf-8")).hexdigest()
    return int(digest, 16) % VOCAB_SIZE


def encode(text: str, max_tokens: int = MAX_TOKENS) -> list[int]:
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("cannot encode empty text")
    return [token_id(token) for token in tokens[:max_tokens]]


def encode_batch(
    texts: list[str], max_tokens: int = MAX_TOKENS
) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad a batch to its longest row; returns (ids, mask), both (B, T)."""
    rows = [encode(text, max_tokens) for text in texts]
    width = max(len(row) for row in rows)
    ids = torch.zeros((len(rows), width), dtype=torch.long)
    mask = torch.zeros((len(rows), width), dtype=torch.bool)
    for index, row in enumerate(rows):
        ids[index, : len(row)] = torch.tensor(row, dtype=torch.long)
        mask[index, : len(row)] = True
    return ids, mask
