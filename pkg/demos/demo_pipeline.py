"""End-to-end walkthrough: build a tiny corpus, train a response generator,
and decode with a length-constrained beam.

Run:  python3 demos/demo_pipeline.py
"""

from fcrg import (
    DecodeConfig,
    FCRGModel,
    ModelConfig,
    SplitSpec,
    TrainConfig,
    beam_search,
    build_vocabulary,
    encode_pair,
    normalize,
    split_dataset,
    tokenize,
    train_model,
)
from fcrg.corpus import RawPair

# A miniature corpus of (original claim, fact-checking reply) pairs.  Real
# inputs would come from a TSV file; the shapes are what matter here.
CLAIMS = [
    ("the photo shows a shark on the highway", "that is an old hoax see url"),
    ("this quote was said on live tv", "no it was fabricated see url"),
    ("the story claims 5000 ballots were found", "that claim was debunked see url"),
    ("this video shows the recent storm", "no the video is from 2012 see url"),
]

pairs = [RawPair(o, r) for o, r in CLAIMS] * 5  # repeat so the split has enough rows

print("normalize + tokenize")
print(" ", tokenize(normalize(CLAIMS[2][0])))

token_lists = []
for p in pairs:
    token_lists.append(tokenize(normalize(p.original_text)))
    token_lists.append(tokenize(normalize(p.reply_text)))
vocab = build_vocabulary(token_lists, min_count=1)
print(f"vocabulary: {vocab.size} tokens")

train, validation, _test = split_dataset(pairs, SplitSpec(seed=0))
encode = lambda rows: [encode_pair(p, vocab) for p in rows]

model = FCRGModel(ModelConfig(
    vocab_size=vocab.size, embed_dim=16, hidden_size=32, output_size=32,
    attention="dot", dropout=0.0, seed=0,
))
result = train_model(
    model, encode(train), encode(validation),
    TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=60, patience=60),
)
print(f"trained: best epoch {result.best_epoch}, "
      f"validation nll/token {result.best_validation_nll:.3f}")

source = encode_pair(pairs[0], vocab).source_ids
for response in beam_search(source, model, DecodeConfig(beam_size=3, min_tokens=5, max_len=16)):
    print(f"  {response.log_prob:8.3f}  {' '.join(vocab.decode(response.ids))}")
