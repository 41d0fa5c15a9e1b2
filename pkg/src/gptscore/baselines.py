"""ROUGE-1/2/L over lowercased whitespace tokens (no stemming)."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from ._accel import kernels
from .datasets import Dataset
from .prompt import Direction, Setting
from .scoring import ScoreRecord


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, hypo_total: int, ref_total: int) -> RougeScore:
        p = overlap / hypo_total if hypo_total else 0.0
        r = overlap / ref_total if ref_total else 0.0
        f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        return cls(p, r, f)


ZERO = RougeScore(0.0, 0.0, 0.0)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(hypo: str, ref: str, n: int = 1) -> RougeScore:
    if n not in (1, 2):
        raise ValueError("ROUGE-N supports n = 1 or 2")
    h, r = tokenize(hypo), tokenize(ref)
    if len(h) < n or len(r) < n:
        return ZERO
    hc, rc = _ngrams(h, n), _ngrams(r, n)
    overlap = sum((hc & rc).values())
    return RougeScore.from_counts(overlap, sum(hc.values()), sum(rc.values()))


def rouge_l(hypo: str, ref: str) -> RougeScore:
    h, r = tokenize(hypo), tokenize(ref)
    if not h or not r:
        return ZERO
    vocab: dict[str, int] = {}
    hid = [vocab.setdefault(t, len(vocab)) for t in h]
    rid = [vocab.setdefault(t, len(vocab)) for t in r]
    return RougeScore.from_counts(int(kernels.lcs_length(hid, rid)), len(h), len(r))


METRICS = {
    "rouge1": lambda h, r: rouge_n(h, r, 1),
    "rouge2": lambda h, r: rouge_n(h, r, 2),
    "rougeL": rouge_l,
}


def score_dataset_rouge(ds: Dataset, variant: str, aspect: str) -> list[ScoreRecord]:
    """ROUGE F1 against the first reference, as ScoreRecords (direction RefToHypo)."""
    try:
        fn = METRICS[variant]
    except KeyError:
        raise ValueError(f"unknown ROUGE variant {variant!r}; expected one of {sorted(METRICS)}") from None
    records = []
    for sample in ds.samples:
        if not sample.references:
            raise ValueError(f"sample {sample.sample_id} has no reference for ROUGE")
        ref = sample.references[0]
        for out in sample.outputs:
            records.append(
                ScoreRecord(
                    sample.sample_id,
                    out.system_id,
                    aspect,
                    Direction.REF_TO_HYPO,
                    Setting.VAL,
                    0,
                    fn(out.text, ref).f1,
                    max(1, len(tokenize(out.text))),
                    variant,
                )
            )
    return records
