"""Corpus metrics over token sequences: BLEU-1..4, METEOR-lite, ROUGE-L and CIDEr-D."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from nltk.stem.porter import PorterStemmer

METRICS = ("bleu1", "bleu2", "bleu3", "bleu4", "meteor", "rouge_l", "cider")
METEOR_NOTE = "meteor: exact + Porter-stem alignment only (no synonym/paraphrase stages)"

ROUGE_BETA2 = 1.2 ** 2
METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0
CIDER_SIGMA = 6.0

Tokens = Sequence[str]


def _check_parallel(hyps, refs) -> None:
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise ValueError("empty corpus")


def ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int = 4) -> float:
    """Corpus BLEU with uniform weights over orders 1..n and brevity penalty."""
    _check_parallel(hyps, refs)
    if not 1 <= n <= 4:
        raise ValueError(f"n must be in 1..4, got {n}")
    hyp_len = sum(len(h) for h in hyps)
    ref_len = sum(len(r) for r in refs)
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for k in range(1, n + 1):
        matched = total = ref_total = 0
        for h, r in zip(hyps, refs):
            hc, rc = ngrams(h, k), ngrams(r, k)
            matched += sum(min(c, rc[g]) for g, c in hc.items())
            total += sum(hc.values())
            ref_total += sum(rc.values())
        if total == 0 and ref_total == 0:
            # neither side is long enough for this order: nothing to penalise
            continue
        if matched == 0:
            return 0.0
        log_p += math.log(matched / total)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p / n)


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_sentence(hyp: Tokens, ref: Tokens, beta2: float = ROUGE_BETA2) -> float:
    if not hyp or not ref:
        return 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return (1 + beta2) * p * r / (r + beta2 * p)


def rouge_l(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    """Mean sentence LCS F-measure, recall-weighted with beta = 1.2."""
    _check_parallel(hyps, refs)
    return sum(rouge_l_sentence(h, r) for h, r in zip(hyps, refs)) / len(hyps)


_stemmer = PorterStemmer()


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    return _stemmer.stem(word)


def align(hyp: Tokens, ref: Tokens) -> list[tuple[int, int]]:
    """Exact matches first, then stem matches among the leftovers; each hypothesis
    word takes the earliest free reference word with the same key."""
    free = set(range(len(ref)))
    pairs = []
    for key in (lambda w: w, stem):
        ref_keys = [key(w) for w in ref]
        for i, w in enumerate(hyp):
            if any(i == a for a, _ in pairs):
                continue
            k = key(w)
            for j in sorted(free):
                if ref_keys[j] == k:
                    pairs.append((i, j))
                    free.discard(j)
                    break
    return sorted(pairs)


def count_chunks(alignment: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_sentence(hyp: Tokens, ref: Tokens) -> float:
    alignment = align(hyp, ref)
    m = len(alignment)
    if m == 0:
        return 0.0
    p, r = m / len(hyp), m / len(ref)
    fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (count_chunks(alignment) / m) ** METEOR_BETA
    return fmean * (1 - penalty)


def meteor_lite(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    _check_parallel(hyps, refs)
    return sum(meteor_sentence(h, r) for h, r in zip(hyps, refs)) / len(hyps)


def _cider_vectors(tokens: Tokens, doc_freq: list[Counter], log_n: float):
    vecs, norms = [], []
    for k in range(1, 5):
        counts = ngrams(tokens, k)
        vec = {g: c * (log_n - math.log(max(1.0, doc_freq[k - 1][g]))) for g, c in counts.items()}
        vecs.append((counts, vec))
        norms.append(math.sqrt(sum(v * v for v in vec.values())))
    return vecs, norms


def cider(hyps: Sequence[Tokens], refs: Sequence[Tokens], idf_refs: Sequence[Tokens] | None = None) -> float:
    """CIDEr-D (sigma 6, clipped counts) with idf from ``idf_refs`` (defaults to ``refs``).

    An n-gram order where both vectors are empty or idf-zero contributes 1 when the
    raw n-gram counts agree and 0 otherwise, so identical sentences always score 10.
    """
    _check_parallel(hyps, refs)
    docs = refs if idf_refs is None else idf_refs
    if len({tuple(d) for d in docs}) < 2:
        raise ValueError("idf undefined: CIDEr needs at least 2 distinct reference sentences")
    doc_freq = [Counter() for _ in range(4)]
    for d in docs:
        for k in range(1, 5):
            doc_freq[k - 1].update(ngrams(d, k).keys())
    log_n = math.log(float(len(docs)))

    total = 0.0
    for h, r in zip(hyps, refs):
        (hv, hn), (rv, rn) = _cider_vectors(h, doc_freq, log_n), _cider_vectors(r, doc_freq, log_n)
        delta = len(h) - len(r)
        score = 0.0
        for (h_counts, h_vec), (r_counts, r_vec), h_norm, r_norm in zip(hv, rv, hn, rn):
            if h_norm == 0 and r_norm == 0:
                sim = 1.0 if h_counts == r_counts else 0.0
            elif h_norm == 0 or r_norm == 0:
                sim = 0.0
            else:
                dot = sum(min(v, r_vec[g]) * r_vec[g] for g, v in h_vec.items() if g in r_vec)
                sim = dot / (h_norm * r_norm)
            score += sim * math.exp(-(delta ** 2) / (2 * CIDER_SIGMA ** 2))
        total += score / 4 * 10.0
    return total / len(hyps)


@dataclass
class MetricReport:
    scores: dict[str, dict[str, float]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    note: str = METEOR_NOTE

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["transfer", *METRICS])
            for name, row in self.scores.items():
                w.writerow([name, *(repr(row[m]) for m in METRICS)])

    def to_text(self) -> str:
        width = max([len("transfer")] + [len(n) for n in self.scores])
        header = f"{'transfer':<{width}}  " + "  ".join(f"{m:>7}" for m in METRICS)
        lines = [f"# {self.note}", header]
        for name, row in self.scores.items():
            lines.append(f"{name:<{width}}  " + "  ".join(f"{row[m]:7.3f}" for m in METRICS))
        return "\n".join(lines) + "\n"


def score_all(hyps, refs, idf_refs=None) -> dict[str, float]:
    row = {f"bleu{n}": bleu_n(hyps, refs, n) for n in range(1, 5)}
    row["meteor"] = meteor_lite(hyps, refs)
    row["rouge_l"] = rouge_l(hyps, refs)
    row["cider"] = cider(hyps, refs, idf_refs)
    return row


def evaluate_corpus(hyps: Sequence[Tokens], refs: Sequence[Tokens], labels: Sequence[str] | None = None,
                    overall: str = "ALL") -> MetricReport:
    """Per-label scores plus an overall row. CIDEr idf always comes from the full
    reference corpus, so a group's CIDEr depends on the other groups' references."""
    _check_parallel(hyps, refs)
    labels = list(labels) if labels is not None else [overall] * len(hyps)
    if len(labels) != len(hyps):
        raise ValueError(f"{len(labels)} labels for {len(hyps)} lines")
    report = MetricReport()
    groups: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    for lab in sorted(groups):
        idx = groups[lab]
        report.scores[lab] = score_all([hyps[i] for i in idx], [refs[i] for i in idx], refs)
        report.counts[lab] = len(idx)
    if overall not in groups:
        report.scores[overall] = score_all(hyps, refs)
        report.counts[overall] = len(hyps)
    return report


def read_lines(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f.read().splitlines()]


def evaluate_files(hyp_path, ref_path, labels: Sequence[str] | None = None) -> MetricReport:
    hyps, refs = read_lines(hyp_path), read_lines(ref_path)
    if len(hyps) != len(refs):
        raise ValueError(f"line count mismatch: {hyp_path} has {len(hyps)}, {ref_path} has {len(refs)}")
    return evaluate_corpus(hyps, refs, labels)
