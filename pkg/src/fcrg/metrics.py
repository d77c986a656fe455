"""Generation evaluation: word-overlap metrics, embedding metrics, significance.

Implements corpus-level BLEU (clipped n-gram precision, brevity penalty),
ROUGE-L (LCS F1), a METEOR-style exact+stem unigram metric with a
fragmentation penalty ("METEOR-lite": no synonym stage), Greedy Matching and
Vector Extrema over a word-vector table, and the one-sided Wilcoxon
signed-rank test for paired score comparisons.

All scores live in [0, 1]; reports scale them by 100.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ._stats import midranks, normal_sf, tie_groups
from .stemmer import porter_stem

Tokens = Sequence[str]

METRIC_NAMES = ("bleu2", "bleu3", "bleu4", "rouge_l", "meteor_lite", "greedy_matching", "vector_extrema")


# ---------------------------------------------------------------- BLEU


def _ngram_counts(tokens: Tokens, order: int) -> Counter:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def bleu_n(
    candidates: Sequence[Tokens],
    references: Sequence[Tokens],
    n: int,
    *,
    sentence_level: bool = False,
    add_one: bool = False,
) -> float:
    """BLEU-n over a parallel corpus.

    Corpus-level by default: clipped n-gram counts for orders 1..n are pooled
    over all pairs before the geometric mean and the brevity penalty
    exp(1 - r/c) for c < r.  ``sentence_level`` averages per-pair scores
    instead, with optional add-one smoothing on orders >= 2 (used for paired
    significance testing).
    """
    if n not in (1, 2, 3, 4):
        raise ValueError(f"BLEU order must be in 1..4, got {n}")
    if len(candidates) != len(references):
        raise ValueError(f"candidate/reference count mismatch: {len(candidates)} vs {len(references)}")
    if not candidates:
        raise ValueError("empty corpus")
    if sentence_level:
        scores = [
            bleu_n([c], [r], n, sentence_level=False, add_one=add_one)
            for c, r in zip(candidates, references)
        ]
        return float(np.mean(scores))

    matched = [0] * n
    total = [0] * n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for order in range(1, n + 1):
            cand_counts = _ngram_counts(cand, order)
            ref_counts = _ngram_counts(ref, order)
            matched[order - 1] += sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
            total[order - 1] += max(len(cand) - order + 1, 0)
    log_sum = 0.0
    for order in range(n):
        num, den = matched[order], total[order]
        if add_one and order > 0:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return 0.0
        log_sum += math.log(num / den)
    precision = math.exp(log_sum / n)
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return precision * brevity


# ---------------------------------------------------------------- ROUGE-L


def _lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """LCS-based F1 between a candidate and a reference."""
    if not reference:
        raise ValueError("reference must be non-empty")
    lcs = _lcs_length(candidate, reference) if candidate else 0
    if lcs == 0:
        return 0.0
    recall = lcs / len(reference)
    precision = lcs / len(candidate)
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------- METEOR-lite


def _stage_quotas(cand: Tokens, ref: Tokens) -> tuple[Counter, Counter]:
    """Exact-match quota per word, then stem-match quota on the residual."""
    cand_counts = Counter(cand)
    ref_counts = Counter(ref)
    exact = Counter({w: min(c, ref_counts[w]) for w, c in cand_counts.items() if min(c, ref_counts[w]) > 0})
    residual_cand = Counter({w: c - exact[w] for w, c in cand_counts.items() if c - exact[w] > 0})
    residual_ref = Counter({w: c - exact[w] for w, c in ref_counts.items() if c - exact[w] > 0})
    cand_stems = Counter()
    for w, c in residual_cand.items():
        cand_stems[porter_stem(w)] += c
    ref_stems = Counter()
    for w, c in residual_ref.items():
        ref_stems[porter_stem(w)] += c
    stem = Counter({s: min(c, ref_stems[s]) for s, c in cand_stems.items() if min(c, ref_stems[s]) > 0})
    return exact, stem


def _min_chunks(cand: Tokens, ref: Tokens, exact: Counter, stem: Counter, node_budget: int = 500_000) -> int:
    """Fewest chunks over alignments realizing the stage-wise maximum matching.

    Branch-and-bound over candidate positions.  ``node_budget`` caps the
    search on adversarial inputs; the best alignment found so far is returned
    once exhausted (tweets stay far below the cap).
    """
    total = sum(exact.values()) + sum(stem.values())
    cand_stems = [porter_stem(w) for w in cand]
    ref_stems = [porter_stem(w) for w in ref]
    best = total + 1  # any valid alignment has at most `total` chunks
    nodes = 0

    # Suffix counts for feasibility pruning on the candidate side.
    suffix_words: list[Counter] = [Counter() for _ in range(len(cand) + 1)]
    suffix_stems: list[Counter] = [Counter() for _ in range(len(cand) + 1)]
    for i in range(len(cand) - 1, -1, -1):
        suffix_words[i] = suffix_words[i + 1].copy()
        suffix_words[i][cand[i]] += 1
        suffix_stems[i] = suffix_stems[i + 1].copy()
        suffix_stems[i][cand_stems[i]] += 1

    def feasible(i: int, exact_left: Counter, stem_left: Counter) -> bool:
        for w, need in exact_left.items():
            if need > suffix_words[i][w]:
                return False
        for s, need in stem_left.items():
            if need > suffix_stems[i][s]:
                return False
        return True

    def dfs(i: int, used: int, exact_left: Counter, stem_left: Counter, last: Optional[tuple[int, int]], chunks: int):
        nonlocal best, nodes
        nodes += 1
        if chunks >= best or nodes > node_budget:
            return
        if i == len(cand):
            if not (+exact_left) and not (+stem_left):
                best = min(best, chunks)
            return
        if not feasible(i, exact_left, stem_left):
            return
        word = cand[i]
        options: list[tuple[int, bool]] = []
        if exact_left[word] > 0:
            options.extend((j, True) for j in range(len(ref)) if ref[j] == word and not used >> j & 1)
        s = cand_stems[i]
        if stem_left[s] > 0:
            # Stem matches pair residual tokens only; same-word pairs are
            # impossible in the residual, so exclude them here.
            options.extend((j, False) for j in range(len(ref)) if ref_stems[j] == s and ref[j] != word and not used >> j & 1)
        # Prefer chunk-continuing matches so good bounds appear early.
        if last is not None:
            options.sort(key=lambda opt: (opt[0] != last[1] + 1,))
        for j, is_exact in options:
            cont = last is not None and last[0] == i - 1 and last[1] == j - 1
            key = word if is_exact else s
            counter = exact_left if is_exact else stem_left
            counter[key] -= 1
            dfs(i + 1, used | 1 << j, exact_left, stem_left, (i, j), chunks + (0 if cont else 1))
            counter[key] += 1
        dfs(i + 1, used, exact_left, stem_left, last, chunks)

    dfs(0, 0, Counter(exact), Counter(stem), None, 0)
    # Budget exhausted before any complete alignment: fall back to the
    # worst case of one chunk per match.
    return min(best, total)


def meteor_lite(candidate: Tokens, reference: Tokens) -> float:
    """Exact+stem unigram F-mean with a fragmentation penalty.

    Alignments maximize matches stage-wise (exact first, then Porter stems)
    with the fewest chunks; score = F_mean * (1 - 0.5 * (chunks/m)^3).
    """
    if not candidate or not reference:
        raise ValueError("candidate and reference must be non-empty")
    exact, stem = _stage_quotas(candidate, reference)
    m = sum(exact.values()) + sum(stem.values())
    if m == 0:
        return 0.0
    chunks = _min_chunks(candidate, reference, exact, stem)
    precision = m / len(candidate)
    recall = m / len(reference)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


# ---------------------------------------------------------------- embedding metrics


class EmbeddingTable:
    """Token -> fixed-dimension vector map; out-of-table tokens are skipped."""

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        if not vectors:
            raise ValueError("embedding table is empty")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.dim = dims.pop()
        self._vectors = {t: np.asarray(v, dtype=np.float64) for t, v in vectors.items()}

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __getitem__(self, token: str) -> np.ndarray:
        return self._vectors[token]

    def lookup(self, tokens: Tokens) -> np.ndarray:
        """Matrix of vectors for in-table tokens; may have zero rows."""
        rows = [self._vectors[t] for t in tokens if t in self._vectors]
        return np.array(rows) if rows else np.empty((0, self.dim))


def load_embedding_table(path) -> EmbeddingTable:
    """One ``token v1 v2 ... vd`` line per token, space-separated decimals."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                raise ValueError(f"{path}: line {lineno}: expected a token and at least one value")
            try:
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed vector") from None
    return EmbeddingTable(vectors)


def embedding_table_from_model(model, vocab) -> EmbeddingTable:
    """Word vectors from a trained model's shared embedding (reserved ids excluded)."""
    emb = model.params["embedding"].data
    return EmbeddingTable({vocab.id_to_token[i]: emb[:, i].copy() for i in range(4, vocab.size)})


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def greedy_matching(candidate: Tokens, reference: Tokens, table: EmbeddingTable) -> float:
    """Symmetric mean of per-token maximal cosines between the two sides."""
    cand = table.lookup(candidate)
    ref = table.lookup(reference)
    if cand.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("no in-table tokens on one side; pair skipped")

    def directed(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.mean([max(_cosine(x, y) for y in b) for x in a]))

    return 0.5 * (directed(cand, ref) + directed(ref, cand))


def extrema_vector(vectors: np.ndarray) -> np.ndarray:
    """Per dimension, the entry of maximum absolute magnitude (sign kept)."""
    maxima = vectors.max(axis=0)
    minima = vectors.min(axis=0)
    return np.where(np.abs(maxima) >= np.abs(minima), maxima, minima)


def vector_extrema(candidate: Tokens, reference: Tokens, table: EmbeddingTable) -> float:
    """Cosine between the extrema-pooled sentence vectors.

    Returns 0.0 when an extrema vector is all zero (degenerate input).  The
    raw cosine may be negative; reporting clamps to [0, 1].
    """
    cand = table.lookup(candidate)
    ref = table.lookup(reference)
    if cand.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("no in-table tokens on one side; pair skipped")
    return _cosine(extrema_vector(cand), extrema_vector(ref))


# ---------------------------------------------------------------- evaluation driver


@dataclass
class MetricReport:
    """Per-source and corpus-aggregate scores for the metric suite."""

    corpus: dict[str, float]
    per_source: dict[str, dict[int, float]]
    skipped: dict[str, int] = field(default_factory=dict)
    negative_extrema: int = 0

    def to_tsv(self) -> str:
        """Tab-separated corpus scores on the x100 scale."""
        names = [n for n in METRIC_NAMES if n in self.corpus]
        header = "\t".join(names)
        row = "\t".join(f"{self.corpus[n] * 100.0:.3f}" for n in names)
        return header + "\n" + row + "\n"


def evaluate(
    generations: Mapping[int, Sequence[Tokens]],
    references: Mapping[int, Tokens],
    table: Optional[EmbeddingTable] = None,
) -> MetricReport:
    """Score every generated response against its source's ground truth.

    Per-source scores average over that source's responses; corpus scores
    average over sources.  Corpus BLEU instead pools n-gram counts over all
    (response, reference) pairs.  Embedding metrics run only when a table is
    given; pairs without in-table tokens are skipped and counted.
    """
    missing = [idx for idx in generations if idx not in references]
    if missing:
        raise ValueError(f"missing references for source indices {missing[:5]}")
    if any(len(responses) == 0 for responses in generations.values()):
        raise ValueError("every source needs at least one generated response")

    all_cands: list[Tokens] = []
    all_refs: list[Tokens] = []
    per_source: dict[str, dict[int, float]] = {name: {} for name in METRIC_NAMES}
    skipped = {"greedy_matching": 0, "vector_extrema": 0}
    negative_extrema = 0

    for idx in sorted(generations):
        responses = generations[idx]
        ref = references[idx]
        buckets: dict[str, list[float]] = {name: [] for name in METRIC_NAMES}
        for response in responses:
            all_cands.append(response)
            all_refs.append(ref)
            buckets["rouge_l"].append(rouge_l(response, ref))
            buckets["meteor_lite"].append(meteor_lite(response, ref) if response else 0.0)
            for n in (2, 3, 4):
                buckets[f"bleu{n}"].append(bleu_n([response], [ref], n))
            if table is not None:
                try:
                    buckets["greedy_matching"].append(greedy_matching(response, ref, table))
                except ValueError:
                    skipped["greedy_matching"] += 1
                try:
                    raw = vector_extrema(response, ref, table)
                    if raw < 0:
                        negative_extrema += 1
                    buckets["vector_extrema"].append(max(raw, 0.0))
                except ValueError:
                    skipped["vector_extrema"] += 1
        for name, values in buckets.items():
            if values:
                per_source[name][idx] = float(np.mean(values))

    corpus: dict[str, float] = {}
    for n in (2, 3, 4):
        corpus[f"bleu{n}"] = bleu_n(all_cands, all_refs, n)
    for name in ("rouge_l", "meteor_lite", "greedy_matching", "vector_extrema"):
        scores = per_source[name]
        if scores:
            corpus[name] = float(np.mean(list(scores.values())))
    return MetricReport(corpus=corpus, per_source=per_source, skipped=skipped, negative_extrema=negative_extrema)


# ---------------------------------------------------------------- significance


@dataclass
class SignificanceResult:
    statistic: float
    p_value: float
    degenerate: bool = False


def wilcoxon_one_sided(scores_a: Sequence[float], scores_b: Sequence[float]) -> SignificanceResult:
    """Paired signed-rank test of a > b.

    Zero differences are dropped.  Exact enumeration of all sign patterns for
    n <= 15; normal approximation with tie correction and continuity
    correction otherwise.  All-zero differences yield p = 1 with the
    degenerate flag set.
    """
    if len(scores_a) != len(scores_b):
        raise ValueError(f"paired samples must have equal length: {len(scores_a)} vs {len(scores_b)}")
    diffs = np.asarray(scores_a, dtype=np.float64) - np.asarray(scores_b, dtype=np.float64)
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        return SignificanceResult(0.0, 1.0, degenerate=True)
    ranks = midranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    if n <= 15:
        count = 0
        for signs in itertools.product((0, 1), repeat=n):
            w = sum(r for r, s in zip(ranks, signs) if s)
            if w >= w_plus - 1e-12:
                count += 1
        return SignificanceResult(w_plus, count / 2.0**n)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    var -= sum(t**3 - t for t in tie_groups(np.abs(diffs))) / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return SignificanceResult(w_plus, normal_sf(z))
