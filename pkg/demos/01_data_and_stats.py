"""Walk through the data layer: tokenization, vocabularies, padded encoding,
and the length histogram.

Run from the repository root:  python demos/01_data_and_stats.py
"""

from tedb import corpus

# A labeled utterance marks its target span with < and >.
text = "All the deaths were just <collateral damage> in their cause."
tokens = corpus.tokenize(text)
print("tokens:", tokens)
# '<' and '>' survive as standalone tokens, punctuation splits off, text is
# lowercased by default.

# Vocabulary indices are frequency-ordered and stable across runs; 0 and 1
# are reserved for padding and unknown tokens.
examples = corpus.synthetic_examples(12, seed=0)
vocab = corpus.build_vocab(examples)
print("vocab size:", vocab.size)
print("first entries:", vocab.tokens[:8])

# Encoding pads to a fixed length and never truncates the marked span away:
# if the span would fall off the end, a window centered on the span is kept.
seq = corpus.encode(tokens, vocab, max_len=20)
print("ids:", seq.ids)
print("real length:", seq.length)

long_tokens = ["filler"] * 180 + ["<", "span", ">"] + ["tail"] * 17
windowed = corpus.encode(long_tokens, vocab, max_len=150)
print("span kept after windowing:", "<" in windowed.tokens and ">" in windowed.tokens)

# The histogram behind the stats subcommand: ((lo, hi), count) per bin.
for (lo, hi), count in corpus.length_histogram(examples, bin_width=5):
    print(f"  {lo:3d}-{hi:3d}  {'#' * count}")
