"""Corpus-linguistic toolkit: lexicon category scoring, LDA topics,
nonparametric significance tests, and document-similarity / length-vs-shares
analyses.

The lexicon format follows the LIWC convention of literal tokens and
pattern-final prefix wildcards (``debunk*``) mapped to named categories; a
document's score for a category is the fraction of its tokens matching that
category.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._stats import midranks, normal_sf, tie_groups
from .corpus import RawPair, normalize, tokenize
from .metrics import EmbeddingTable

Tokens = Sequence[str]


# ---------------------------------------------------------------- lexicon


@dataclass
class Lexicon:
    """Category names plus literal and prefix-wildcard patterns."""

    categories: list[str]
    literals: dict[str, frozenset[int]]
    prefixes: list[tuple[str, frozenset[int]]]

    def match(self, token: str) -> set[str]:
        hits: set[int] = set(self.literals.get(token, ()))
        for prefix, cats in self.prefixes:
            if token.startswith(prefix):
                hits |= cats
        return {self.categories[i] for i in hits}

    @classmethod
    def parse(cls, text: str, origin: str = "<lexicon>") -> "Lexicon":
        """Parse the two-section format: ``id <TAB> name`` lines, a ``%``
        separator, then ``pattern <TAB> id[,id...]`` entries."""
        id_to_index: dict[str, int] = {}
        categories: list[str] = []
        literals: dict[str, set[int]] = {}
        prefixes: dict[str, set[int]] = {}
        in_entries = False
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "%":
                in_entries = True
                continue
            parts = line.split("\t")
            if not in_entries:
                if len(parts) != 2:
                    raise ValueError(f"{origin}: line {lineno}: expected 'id <TAB> name'")
                cat_id, name = parts
                if cat_id in id_to_index:
                    raise ValueError(f"{origin}: line {lineno}: duplicate category id {cat_id!r}")
                id_to_index[cat_id] = len(categories)
                categories.append(name)
            else:
                if len(parts) != 2 or not parts[0]:
                    raise ValueError(f"{origin}: line {lineno}: expected 'pattern <TAB> id[,id...]'")
                pattern, ids = parts
                if "*" in pattern[:-1]:
                    raise ValueError(f"{origin}: line {lineno}: '*' is only allowed pattern-final")
                try:
                    indices = {id_to_index[i] for i in ids.split(",")}
                except KeyError as exc:
                    raise ValueError(f"{origin}: line {lineno}: undeclared category id {exc}") from None
                if pattern.endswith("*"):
                    prefixes.setdefault(pattern[:-1], set()).update(indices)
                else:
                    literals.setdefault(pattern, set()).update(indices)
        if not categories:
            raise ValueError(f"{origin}: no categories declared")
        return cls(
            categories=categories,
            literals={t: frozenset(s) for t, s in literals.items()},
            prefixes=sorted((p, frozenset(s)) for p, s in prefixes.items()),
        )

    @classmethod
    def load(cls, path) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), origin=str(path))


def category_score(tokens: Tokens, lexicon: Lexicon) -> dict[str, float]:
    """Per-category fraction of tokens matching the category.

    A token may hit several categories.  Raises on an empty document (scores
    undefined).
    """
    if not tokens:
        raise ValueError("empty document: category scores undefined")
    counts = Counter()
    for token in tokens:
        for category in lexicon.match(token):
            counts[category] += 1
    return {c: counts[c] / len(tokens) for c in lexicon.categories}


@dataclass
class CategoryStats:
    """Mean and population variance per category over a document group."""

    means: dict[str, float]
    variances: dict[str, float]
    sample_size: int
    skipped_empty: int = 0


def group_stats(documents: Sequence[Tokens], lexicon: Lexicon) -> CategoryStats:
    scored = []
    skipped = 0
    for doc in documents:
        try:
            scored.append(category_score(doc, lexicon))
        except ValueError:
            skipped += 1
    if len(scored) < 2:
        raise ValueError("need at least 2 non-empty documents")
    means: dict[str, float] = {}
    variances: dict[str, float] = {}
    for category in lexicon.categories:
        values = np.array([s[category] for s in scored])
        means[category] = float(values.mean())
        variances[category] = float(values.var())  # population variance
    return CategoryStats(means, variances, len(scored), skipped)


# ---------------------------------------------------------------- LDA


@dataclass
class TopicModel:
    num_topics: int
    alpha: float
    beta: float
    iterations: int
    seed: int
    vocab: list[str]
    doc_topic: np.ndarray  # (D, K) counts
    topic_word: np.ndarray  # (K, V) counts
    topic_totals: np.ndarray  # (K,)
    assignments: list[np.ndarray]
    doc_tokens: list[np.ndarray]


def _site_weights(doc_topic_row: np.ndarray, word_column: np.ndarray, topic_totals: np.ndarray,
                  alpha: float, beta: float, vocab_size: int) -> np.ndarray:
    """Unnormalized collapsed-Gibbs weights p(z=k) with own count removed."""
    return (doc_topic_row + alpha) * (word_column + beta) / (topic_totals + vocab_size * beta)


def lda_fit(
    documents: Sequence[Tokens],
    num_topics: int,
    alpha: Optional[float] = None,
    beta: float = 0.01,
    iterations: int = 1000,
    seed: int = 0,
    on_sweep=None,
) -> TopicModel:
    """Collapsed Gibbs sampling over token-topic assignments.

    ``alpha`` defaults to 50/K.  Deterministic under the seed.  ``on_sweep``
    (if given) is called with the partially fitted model after every sweep.
    """
    if num_topics < 1:
        raise ValueError("num_topics must be >= 1")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if any(len(d) == 0 for d in documents):
        raise ValueError("every document must be non-empty")
    if alpha is None:
        alpha = 50.0 / num_topics
    vocab = sorted({t for doc in documents for t in doc})
    if not vocab:
        raise ValueError("vocabulary of size 0")
    token_to_id = {t: i for i, t in enumerate(vocab)}
    vocab_size = len(vocab)
    doc_tokens = [np.array([token_to_id[t] for t in doc], dtype=np.int64) for doc in documents]

    rng = np.random.default_rng(seed)
    doc_topic = np.zeros((len(documents), num_topics), dtype=np.int64)
    topic_word = np.zeros((num_topics, vocab_size), dtype=np.int64)
    topic_totals = np.zeros(num_topics, dtype=np.int64)
    assignments: list[np.ndarray] = []
    for d, ids in enumerate(doc_tokens):
        z = rng.integers(0, num_topics, size=len(ids))
        assignments.append(z)
        for w, k in zip(ids, z):
            doc_topic[d, k] += 1
            topic_word[k, w] += 1
            topic_totals[k] += 1

    model = TopicModel(num_topics, alpha, beta, iterations, seed, vocab,
                       doc_topic, topic_word, topic_totals, assignments, doc_tokens)
    for _ in range(iterations):
        for d, ids in enumerate(doc_tokens):
            z = assignments[d]
            for pos, w in enumerate(ids):
                k_old = z[pos]
                doc_topic[d, k_old] -= 1
                topic_word[k_old, w] -= 1
                topic_totals[k_old] -= 1
                weights = _site_weights(doc_topic[d], topic_word[:, w], topic_totals, alpha, beta, vocab_size)
                cdf = np.cumsum(weights)
                k_new = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
                z[pos] = k_new
                doc_topic[d, k_new] += 1
                topic_word[k_new, w] += 1
                topic_totals[k_new] += 1
        if on_sweep is not None:
            on_sweep(model)
    return model


def lda_top_words(model: TopicModel, m: int) -> list[list[str]]:
    """Top-m words per topic by smoothed topic-word probability, ties by id."""
    result = []
    for k in range(model.num_topics):
        probs = (model.topic_word[k] + model.beta) / (model.topic_totals[k] + len(model.vocab) * model.beta)
        order = sorted(range(len(model.vocab)), key=lambda w: (-probs[w], w))
        result.append([model.vocab[w] for w in order[:m]])
    return result


# ---------------------------------------------------------------- rank tests


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float], alternative: str = "a_greater") -> tuple[float, float]:
    """One-sided Mann-Whitney U test.

    Exact p by enumeration of rank arrangements when the combined sample has
    at most 12 tie-free observations; normal approximation with tie-corrected
    variance and continuity correction otherwise.  Returns (U of sample a, p).
    """
    if alternative not in ("a_greater", "b_greater"):
        raise ValueError(f"alternative must be 'a_greater' or 'b_greater', got {alternative!r}")
    if alternative == "b_greater":
        u_b, p = mann_whitney_u(sample_b, sample_a, "a_greater")
        n_a, n_b = len(sample_a), len(sample_b)
        return n_a * n_b - u_b, p
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    combined = np.concatenate([a, b])
    ranks = midranks(combined)
    u_a = float(ranks[: len(a)].sum() - len(a) * (len(a) + 1) / 2.0)
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    tie_free = len(np.unique(combined)) == n
    if n <= 12 and tie_free:
        sorted_ranks = np.arange(1, n + 1, dtype=np.float64)
        offset = n_a * (n_a + 1) / 2.0
        count = 0
        total = 0
        for positions in itertools.combinations(range(n), n_a):
            u = sorted_ranks[list(positions)].sum() - offset
            total += 1
            if u >= u_a - 1e-12:
                count += 1
        return u_a, count / total
    mean = n_a * n_b / 2.0
    tie_term = sum(t**3 - t for t in tie_groups(combined)) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var == 0:
        return u_a, 1.0
    z = (u_a - mean - 0.5) / math.sqrt(var)
    return u_a, normal_sf(z)


def two_proportion_z(count_a: int, n_a: int, count_b: int, n_b: int, alternative: str = "a_greater") -> tuple[float, float]:
    """Pooled-proportion one-sided z test.

    Degenerate pooled proportions (all zero or all one) give z = 0, p = 1.
    """
    if n_a < 1 or n_b < 1:
        raise ValueError("sample sizes must be >= 1")
    if not (0 <= count_a <= n_a and 0 <= count_b <= n_b):
        raise ValueError("counts must not exceed sample sizes")
    if alternative not in ("a_greater", "b_greater"):
        raise ValueError(f"alternative must be 'a_greater' or 'b_greater', got {alternative!r}")
    pooled = (count_a + count_b) / (n_a + n_b)
    if pooled == 0.0 or pooled == 1.0:
        return 0.0, 1.0
    p_a, p_b = count_a / n_a, count_b / n_b
    z = (p_a - p_b) / math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
    if alternative == "b_greater":
        z = -z
    return z, normal_sf(z)


# ---------------------------------------------------------------- document analyses


def doc_similarity(doc_a: Tokens, doc_b: Tokens, table: EmbeddingTable) -> float:
    """Cosine between mean-pooled token vectors of the two documents."""
    a = table.lookup(doc_a)
    b = table.lookup(doc_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("no in-table tokens in one document; pair skipped")
    mean_a = a.mean(axis=0)
    mean_b = b.mean(axis=0)
    na, nb = np.linalg.norm(mean_a), np.linalg.norm(mean_b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(mean_a @ mean_b / (na * nb), -1.0, 1.0))


SHORT_BUCKET = (0, 9)
LONG_BUCKET = (10, 20)


def length_share_test(pairs: Sequence[RawPair], gazetteer: frozenset[str] = frozenset()) -> tuple[float, float]:
    """Mann-Whitney test that longer replies (10-20 tokens) get more shares
    than short ones (0-9 tokens).  Bucket bounds are inclusive; pairs without
    a share count or beyond 20 tokens are ignored."""
    short_shares: list[float] = []
    long_shares: list[float] = []
    for pair in pairs:
        if pair.share_count is None:
            continue
        length = len(tokenize(normalize(pair.reply_text, gazetteer)))
        if SHORT_BUCKET[0] <= length <= SHORT_BUCKET[1]:
            short_shares.append(pair.share_count)
        elif LONG_BUCKET[0] <= length <= LONG_BUCKET[1]:
            long_shares.append(pair.share_count)
    if not long_shares:
        raise ValueError("long bucket (10-20 tokens) is empty")
    if not short_shares:
        raise ValueError("short bucket (0-9 tokens) is empty")
    return mann_whitney_u(long_shares, short_shares, "a_greater")
