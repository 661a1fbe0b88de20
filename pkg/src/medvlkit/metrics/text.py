"""Corpus-level caption metrics: BLEU, ROUGE-L, METEOR and CIDEr-D.

All four share one tokenization (:func:`medvlkit.parse.tokenize`): answer
normalization, whitespace split, and one token per CJK character.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Sequence, Union

from ..errors import AlignmentError, CorpusTooSmall, DegenerateReference
from ..parse import tokenize

Refs = Union[str, Sequence[str]]


def _check_aligned(preds, refs):
    if len(preds) != len(refs):
        raise AlignmentError(f"{len(preds)} predictions vs {len(refs)} references")
    if not preds:
        raise ValueError("empty corpus")


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(preds: Sequence[str], refs: Sequence[str], max_n: int = 4) -> float:
    """Corpus BLEU x100 with add-one smoothing on zero-match orders.

    An order with no clipped matches gets precision ``1 / (total + 1)``;
    other orders use the plain clipped precision.
    """
    _check_aligned(preds, refs)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for pred, ref in zip(preds, refs):
        pt, rt = tokenize(pred), tokenize(ref)
        hyp_len += len(pt)
        ref_len += len(rt)
        for n in range(1, max_n + 1):
            pc, rc = ngram_counts(pt, n), ngram_counts(rt, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in pc.items())
            totals[n - 1] += max(len(pt) - n + 1, 0)
    if ref_len == 0:
        raise DegenerateReference("all references are empty")
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        log_p += math.log(m / t) if m else math.log(1.0 / (t + 1))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p / max_n)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_pair(pred: str, ref: str) -> float:
    """LCS F1 for one pair, as a fraction."""
    pt, rt = tokenize(pred), tokenize(ref)
    if not rt:
        raise DegenerateReference(f"empty reference: {ref!r}")
    lcs = lcs_length(pt, rt)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(pt), lcs / len(rt)
    return 2 * p * r / (p + r)


def rouge_l(preds: Sequence[str], refs: Sequence[str]) -> float:
    _check_aligned(preds, refs)
    return 100.0 * math.fsum(rouge_l_pair(p, r) for p, r in zip(preds, refs)) / len(preds)


def align_exact(hyp: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Exact unigram alignment, one-to-one, maximal.

    Hypothesis tokens are visited left to right. Each takes the reference
    position right after the previous match when that continues a chunk,
    otherwise the earliest unused occurrence.
    """
    positions: dict[str, list[int]] = defaultdict(list)
    for j, tok in enumerate(ref):
        positions[tok].append(j)
    used: set[int] = set()
    pairs = []
    prev_j = None
    for i, tok in enumerate(hyp):
        free = [j for j in positions.get(tok, ()) if j not in used]
        if not free:
            prev_j = None
            continue
        if prev_j is not None and prev_j + 1 in free:
            j = prev_j + 1
        else:
            j = free[0]
        used.add(j)
        pairs.append((i, j))
        prev_j = j
    return pairs


def count_chunks(pairs: Sequence[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in sorted(pairs):
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_pair(pred: str, ref: str) -> float:
    """Exact-match METEOR for one pair (alpha=0.9, beta=3, gamma=0.5)."""
    pt, rt = tokenize(pred), tokenize(ref)
    if not rt:
        raise DegenerateReference(f"empty reference: {ref!r}")
    pairs = align_exact(pt, rt)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, r = m / len(pt), m / len(rt)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (count_chunks(pairs) / m) ** 3
    return f_mean * (1 - penalty)


def meteor(preds: Sequence[str], refs: Sequence[str]) -> float:
    _check_aligned(preds, refs)
    return 100.0 * math.fsum(meteor_pair(p, r) for p, r in zip(preds, refs)) / len(preds)


def _as_ref_list(r: Refs) -> list[str]:
    return [r] if isinstance(r, str) else list(r)


class _CiderVectors:
    def __init__(self, n: int, df: dict, log_n: float):
        self.n = n
        self.df = df
        self.log_n = log_n

    def vec(self, tokens):
        vec = [dict() for _ in range(self.n)]
        norm = [0.0] * self.n
        for k in range(1, self.n + 1):
            for g, tf in ngram_counts(tokens, k).items():
                w = tf * (self.log_n - math.log(max(1.0, self.df.get(g, 0.0))))
                vec[k - 1][g] = w
                norm[k - 1] += w * w
        return vec, [math.sqrt(x) for x in norm], len(tokens)


def cider_d_scores(
    preds: Sequence[str], refs: Sequence[Refs], n: int = 4, sigma: float = 6.0
) -> list[float]:
    """Per-pair CIDEr-D (x10 scale) with IDF taken over the reference corpus."""
    _check_aligned(preds, refs)
    if len(preds) < 2:
        raise CorpusTooSmall("CIDEr-D needs at least 2 pairs for document frequencies")
    ref_toks = [[tokenize(r) for r in _as_ref_list(rs)] for rs in refs]
    if any(not rs for rs in ref_toks):
        raise DegenerateReference("a sample has no references")
    df: Counter = Counter()
    for rs in ref_toks:
        df.update({g for rt in rs for k in range(1, n + 1) for g in ngram_counts(rt, k)})
    space = _CiderVectors(n, df, math.log(float(len(ref_toks))))

    out = []
    for pred, rs in zip(preds, ref_toks):
        hv, hn, hl = space.vec(tokenize(pred))
        total = 0.0
        for rt in rs:
            rv, rn, rl = space.vec(rt)
            penalty = math.exp(-((hl - rl) ** 2) / (2 * sigma**2))
            sims = []
            for k in range(n):
                val = sum(min(w, rv[k].get(g, 0.0)) * rv[k].get(g, 0.0) for g, w in hv[k].items())
                if hn[k] != 0 and rn[k] != 0:
                    val /= hn[k] * rn[k]
                sims.append(val * penalty)
            total += sum(sims) / n
        out.append(10.0 * total / len(rs))
    return out


def cider_d(preds: Sequence[str], refs: Sequence[Refs], n: int = 4, sigma: float = 6.0) -> float:
    scores = cider_d_scores(preds, refs, n, sigma)
    return math.fsum(scores) / len(scores)
