"""Paired-sentence corpus: loading, preprocessing, splitting and condition building."""
from __future__ import annotations

import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD = "<PAD>"
UNK = "UNK"
NUM = "NUM"
EOS = "<EOS>"
SEP = "<SEP>"

MIN_COUNT = 3
DEFAULT_PROPORTIONS = (0.9, 0.05, 0.05)

_NUMERIC = re.compile(r"^[+-]?(\d{1,3}(,\d{3})+|\d+)?(\.\d+)?$")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Transfer:
    name: str
    needs_extra: bool = False
    group: str = "single"

    @property
    def token(self) -> str:
        return f"<{self.name.upper()}>"


# Registry order is the canonical order of prepended style tokens (tense first).
_TRANSFERS = [
    Transfer("ToFuture"),
    Transfer("ToPresent"),
    Transfer("ToPast"),
    Transfer("NoTenseChange", group="composition"),
    Transfer("ActiveToPassive"),
    Transfer("PassiveToActive"),
    Transfer("NoVoiceChange", group="composition"),
    Transfer("PPFrontToBack"),
    Transfer("PPBackToFront"),
    Transfer("ADJADVRemoval"),
    Transfer("PPRemoval"),
    Transfer("NoPPRemoval", group="composition"),
    Transfer("SubstatementRemoval"),
    Transfer("InformationAddition", needs_extra=True),
    Transfer("VerbEmphasis", needs_extra=True),
    Transfer("AdjectiveEmphasis", needs_extra=True),
    Transfer("Copy", group="synthetic"),
    Transfer("Reverse", group="synthetic"),
]
TRANSFERS: dict[str, Transfer] = {t.name: t for t in _TRANSFERS}
_ORDER = {name: i for i, name in enumerate(TRANSFERS)}

SPECIALS = (PAD, UNK, NUM, EOS, SEP) + tuple(t.token for t in _TRANSFERS)
_SPECIAL_SET = frozenset(SPECIALS)


def get_transfer(name: str) -> Transfer:
    try:
        return TRANSFERS[name]
    except KeyError:
        valid = ", ".join(TRANSFERS)
        raise CorpusError(f"unknown transfer {name!r}; valid names: {valid}") from None


def parse_transfers(spec: str) -> tuple[str, ...]:
    """Parse ``"ToPast+ActiveToPassive"`` into registered transfer names ('' -> ())."""
    names = tuple(s for s in spec.strip().split("+") if s)
    for name in names:
        get_transfer(name)
    return names


def canonical_order(transfers: Iterable[str]) -> tuple[str, ...]:
    names = [get_transfer(n).name for n in transfers]
    return tuple(sorted(names, key=_ORDER.__getitem__))


@dataclass(frozen=True)
class SentencePair:
    source: tuple[str, ...]
    target: tuple[str, ...]
    transfers: tuple[str, ...] = ()
    extra_info: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.source or not self.target:
            raise CorpusError("source and target must be nonempty")
        if self.extra_info and not any(get_transfer(t).needs_extra for t in self.transfers):
            raise CorpusError(
                f"extra_info given for transfers {list(self.transfers)} that take none"
            )


@dataclass
class SplitDataset:
    train: list[SentencePair]
    valid: list[SentencePair]
    test: list[SentencePair]
    proportions: tuple[float, float, float] = DEFAULT_PROPORTIONS
    indices: dict[str, list[int]] = field(default_factory=dict)


def load_pairs(path, transfer: str | Sequence[str] | None = None) -> list[SentencePair]:
    """Read a ``source<TAB>target[<TAB>extra info]`` file.

    When ``transfer`` is omitted the file stem names it, e.g. ``ToPast+ActiveToPassive.tsv``.
    """
    path = Path(path)
    if transfer is None:
        transfers = parse_transfers(path.stem)
    elif isinstance(transfer, str):
        transfers = parse_transfers(transfer)
    else:
        transfers = tuple(get_transfer(t).name for t in transfer)
    transfers = canonical_order(transfers)

    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise CorpusError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields, got {len(fields)}")
            extra = tuple(fields[2].split()) if len(fields) == 3 else ()
            try:
                pairs.append(SentencePair(tuple(fields[0].split()), tuple(fields[1].split()), transfers, extra))
            except CorpusError as e:
                raise CorpusError(f"{path}:{lineno}: {e}") from None
    if not pairs:
        raise CorpusError(f"{path}: no pairs")
    return pairs


def is_special(token: str) -> bool:
    return token in _SPECIAL_SET


def is_numeric(token: str) -> bool:
    return any(c.isdigit() for c in token) and _NUMERIC.match(token) is not None


def pair_tokens(pair: SentencePair) -> Iterable[str]:
    yield from pair.source
    yield from pair.target
    yield from pair.extra_info


def count_tokens(pairs: Iterable[SentencePair]) -> Counter:
    """Lowercased token counts over sources, targets and extra info."""
    counts: Counter = Counter()
    for pair in pairs:
        counts.update(tok if is_special(tok) else tok.lower() for tok in pair_tokens(pair))
    return counts


def preprocess(tokens: Sequence[str], train_counts) -> list[str]:
    out = []
    for tok in tokens:
        if is_special(tok):
            out.append(tok)
            continue
        tok = tok.lower()
        if is_numeric(tok):
            out.append(NUM)
        elif train_counts.get(tok, 0) < MIN_COUNT:
            out.append(UNK)
        else:
            out.append(tok)
    return out


def preprocess_pair(pair: SentencePair, train_counts) -> SentencePair:
    return SentencePair(
        tuple(preprocess(pair.source, train_counts)),
        tuple(preprocess(pair.target, train_counts)),
        pair.transfers,
        tuple(preprocess(pair.extra_info, train_counts)),
    )


def split_sizes(n: int, proportions=DEFAULT_PROPORTIONS) -> tuple[int, int, int]:
    if n < 3:
        raise CorpusError(f"need at least 3 pairs to split, got {n}")
    if len(proportions) != 3 or any(p <= 0 for p in proportions):
        raise CorpusError(f"proportions must be three positive fractions, got {proportions}")
    if not math.isclose(sum(proportions), 1.0, abs_tol=1e-9):
        raise CorpusError(f"proportions must sum to 1, got {sum(proportions)}")
    # +1e-9 keeps 100 * 0.05 from flooring to 4 on representation error
    n_valid = max(1, math.floor(n * proportions[1] + 1e-9))
    n_test = max(1, math.floor(n * proportions[2] + 1e-9))
    n_train = n - n_valid - n_test
    if n_train < 1:
        raise CorpusError(f"{n} pairs leave no training data under {proportions}")
    return n_train, n_valid, n_test


def split(pairs: Sequence[SentencePair], proportions=DEFAULT_PROPORTIONS, seed: int = 0) -> SplitDataset:
    n_train, n_valid, _ = split_sizes(len(pairs), proportions)
    order = list(range(len(pairs)))
    random.Random(seed).shuffle(order)
    idx = {
        "train": sorted(order[:n_train]),
        "valid": sorted(order[n_train:n_train + n_valid]),
        "test": sorted(order[n_train + n_valid:]),
    }
    return SplitDataset(
        train=[pairs[i] for i in idx["train"]],
        valid=[pairs[i] for i in idx["valid"]],
        test=[pairs[i] for i in idx["test"]],
        proportions=tuple(proportions),
        indices=idx,
    )


def build_condition(pair: SentencePair, style_tokens: bool = True) -> list[str]:
    """Style tokens, then ``SEP extra... SEP`` when extra info is present, then the source.

    ``style_tokens=False`` gives the single-task condition where the transfer is implicit.
    """
    cond = []
    if style_tokens:
        cond.extend(get_transfer(t).token for t in pair.transfers)
    else:
        for t in pair.transfers:
            get_transfer(t)
    if pair.extra_info:
        cond.append(SEP)
        cond.extend(pair.extra_info)
        cond.append(SEP)
    cond.extend(pair.source)
    return cond


def write_manifest(path, manifests: dict[str, dict[str, list[int]]]) -> None:
    """One line per (file stem, split): ``stem<TAB>split<TAB>space-separated line indices``."""
    with open(path, "w", encoding="utf-8") as f:
        for stem in sorted(manifests):
            for name in ("train", "valid", "test"):
                f.write(f"{stem}\t{name}\t{' '.join(map(str, manifests[stem][name]))}\n")


def read_manifest(path) -> dict[str, dict[str, list[int]]]:
    out: dict[str, dict[str, list[int]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3 or fields[1] not in ("train", "valid", "test"):
                raise CorpusError(f"{path}:{lineno}: malformed manifest line")
            out.setdefault(fields[0], {})[fields[1]] = [int(i) for i in fields[2].split()]
    return out


def format_row(pair: SentencePair, with_target: bool = True) -> str:
    cols = ["+".join(pair.transfers), " ".join(pair.extra_info), " ".join(pair.source)]
    if with_target:
        cols.append(" ".join(pair.target))
    return "\t".join(cols)


def read_rows(path) -> list[tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...], tuple[str, ...] | None]]:
    """Read ``transfers<TAB>extra_info<TAB>source[<TAB>target]`` rows."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4) or not fields[2].strip():
                raise CorpusError(f"{path}:{lineno}: expected transfers, extra_info, source[, target]")
            try:
                transfers = canonical_order(parse_transfers(fields[0]))
            except CorpusError as e:
                raise CorpusError(f"{path}:{lineno}: {e}") from None
            target = tuple(fields[3].split()) if len(fields) == 4 else None
            rows.append((transfers, tuple(fields[1].split()), tuple(fields[2].split()), target))
    return rows
