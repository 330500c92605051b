"""Build a tiny local BERT-style checkpoint for offline tests and demos.

The result is a normal `save_pretrained` directory, so the exporter treats
it exactly like a hub checkpoint id.
"""

from __future__ import annotations

import os

_WORDS = [
    "they", "put", "it", "rather", "during", "the", "meeting", "yesterday",
    "today", "again", "gently", "softly", "kindly", "warmly", "calmly",
    "sweetly", "harshly", "bluntly", "rudely", "loudly", "coldly", "sharply",
    "apparently", "reportedly", "somehow", "a", "an", "of", "in", "was",
]


def build_toy_checkpoint(directory, hidden_size: int = 32, layers: int = 4,
                         heads: int = 2, seed: int = 0) -> str:
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    os.makedirs(directory, exist_ok=True)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "<", ">", ".", ","] + _WORDS
    vocab_path = os.path.join(directory, "vocab.txt")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab) + "\n")
    # from_pretrained converts vocab.txt into a proper wordpiece tokenizer;
    # direct BertTokenizer(vocab_file=...) construction keeps only specials
    tokenizer = BertTokenizer.from_pretrained(directory, do_lower_case=True)
    assert tokenizer.vocab_size == len(vocab)
    tokenizer.save_pretrained(directory)

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=hidden_size,
        num_hidden_layers=layers,
        num_attention_heads=heads,
        intermediate_size=hidden_size * 2,
        max_position_embeddings=192,
    )
    BertModel(config).save_pretrained(directory)
    return str(directory)
