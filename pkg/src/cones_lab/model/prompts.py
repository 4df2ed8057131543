"""Prompt construction helpers.

All prompts are separator-joined class groups; each class carries a span of
positions whose embeddings are mean-pooled into its class embedding.  The
tuning baselines extend the plain detection prompt with placeholder
positions whose embeddings are overridden by learnable vectors.
"""

import numpy as np

from ..data.vocab import Vocabulary
from .vlm import TextPrompt


def detection_prompt(vocab: Vocabulary, class_ids) -> TextPrompt:
    """Zero-shot style prompt: class names joined by the separator."""
    tokens, spans = [], []
    for j, cid in enumerate(class_ids):
        if j:
            tokens.append(vocab.sep_id)
        start = len(tokens)
        tokens.extend(vocab.encode_class(cid))
        spans.append((int(cid), start, len(tokens)))
    return TextPrompt(np.asarray(tokens, dtype=np.int64), spans)


def context_prompt(vocab: Vocabulary, class_ids, m: int):
    """Prompt-tuning layout: m placeholder slots around each class name,
    the extra one before the name when m is odd.

    Returns (prompt, slots) where slots[k] lists the m positions belonging
    to class k, in order.  Placeholder positions hold the padding token id;
    their embeddings are meant to be overridden.  Spans still cover only
    the class-name tokens, so m=0 degenerates to the zero-shot prompt.
    """
    tokens, spans, slots = [], [], []
    lead = (m + 1) // 2
    for j, cid in enumerate(class_ids):
        if j:
            tokens.append(vocab.sep_id)
        mine = []
        for _ in range(lead):
            mine.append(len(tokens))
            tokens.append(vocab.pad_id)
        start = len(tokens)
        tokens.extend(vocab.encode_class(cid))
        spans.append((int(cid), start, len(tokens)))
        for _ in range(m - lead):
            mine.append(len(tokens))
            tokens.append(vocab.pad_id)
        slots.append(mine)
    return TextPrompt(np.asarray(tokens, dtype=np.int64), spans), slots


def pseudoword_prompt(vocab: Vocabulary, class_ids, m: int):
    """Pseudo-word layout: m placeholder slots REPLACE each class name and
    double as its pooling span.  Returns (prompt, slots) as above."""
    if m < 1:
        raise ValueError("pseudo-word prompts need at least one slot per class")
    tokens, spans, slots = [], [], []
    for j, cid in enumerate(class_ids):
        if j:
            tokens.append(vocab.sep_id)
        start = len(tokens)
        slots.append(list(range(start, start + m)))
        tokens.extend([vocab.pad_id] * m)
        spans.append((int(cid), start, len(tokens)))
    return TextPrompt(np.asarray(tokens, dtype=np.int64), spans), slots
