"""Word-level vocabulary with reserved specials."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .corpus import EOS, NUM, PAD, SEP, SPECIALS, UNK, SentencePair, pair_tokens


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if list(tokens[: len(SPECIALS)]) != list(SPECIALS):
            raise ValueError("vocabulary must start with the reserved specials in fixed order")
        self.itos = list(tokens)
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    pad_id = property(lambda self: self.stoi[PAD])
    unk_id = property(lambda self: self.stoi[UNK])
    num_id = property(lambda self: self.stoi[NUM])
    eos_id = property(lambda self: self.stoi[EOS])
    sep_id = property(lambda self: self.stoi[SEP])

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, tokens: Sequence[str], max_len: int, pad: bool = True) -> list[int]:
        """Map tokens to ids, append EOS, truncate to ``max_len`` and optionally pad."""
        if max_len < 2:
            raise ValueError(f"max_len must be >= 2, got {max_len}")
        ids = [self.stoi.get(tok, self.unk_id) for tok in tokens[: max_len - 1]]
        ids.append(self.eos_id)
        if pad:
            ids.extend([self.pad_id] * (max_len - len(ids)))
        return ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.itos):
                raise ValueError(f"id {i} out of range for vocabulary of size {len(self.itos)}")
            if i == self.eos_id:
                break
            if i != self.pad_id:
                out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("".join(tok + "\n" for tok in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_vocab(train_pairs: Iterable[SentencePair]) -> Vocabulary:
    """Specials first, then corpus tokens in order of first appearance."""
    tokens = list(SPECIALS)
    seen = set(tokens)
    for pair in train_pairs:
        for tok in pair_tokens(pair):
            if tok not in seen:
                seen.add(tok)
                tokens.append(tok)
    return Vocabulary(tokens)
