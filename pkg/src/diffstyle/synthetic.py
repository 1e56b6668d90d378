"""Copy-vs-reverse benchmark: a desk-scale end-to-end check of style-token control."""
from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import RunConfig, build_config
from .corpus import SentencePair, SplitDataset, count_tokens
from .metrics import bleu_n, evaluate_corpus
from .sampler import load_bundle, transfer_batch
from .tokenizer import build_vocab
from .trainer import Trainer

log = logging.getLogger(__name__)

N_SYMBOLS = 20
MIN_LEN, MAX_LEN = 3, 8
N_TRAIN, N_TEST, N_VALID = 2000, 200, 50

BLEU1_MIN = 0.95
BLEU4_MIN = 0.90
FLIP_MIN = 0.95

# Ls: one style token + 8 symbols + EOS fits in 12; Lt: 8 symbols + EOS.
DEFAULTS = {
    "mode": "multitask",
    "cond_len": 12,
    "target_len": 12,
    "diffusion_steps": 200,
    "beta_start": 1e-3,
    "beta_end": 0.2,
    "batch_size": 64,
    "lr": 1e-3,
    "warmup_steps": 200,
    "max_steps": 4000,
    "checkpoint_interval": 1000,
    "valid_interval": 500,
}


def apply_style(style: str, tokens):
    return tuple(tokens) if style == "Copy" else tuple(reversed(tokens))


def other_style(style: str) -> str:
    return "Reverse" if style == "Copy" else "Copy"


def make_task(seed: int, n_train: int = N_TRAIN, n_test: int = N_TEST,
              n_valid: int = N_VALID) -> tuple[list[SentencePair], list[SentencePair], list[SentencePair]]:
    """Random symbol strings, each assigned Copy or Reverse. Returns (train, test, valid) with no
    source shared between any two of them."""
    rng = random.Random(seed)
    symbols = [f"s{i:02d}" for i in range(N_SYMBOLS)]
    seen: set[tuple[str, ...]] = set()

    def draw(n):
        out = []
        while len(out) < n:
            src = tuple(rng.choice(symbols) for _ in range(rng.randint(MIN_LEN, MAX_LEN)))
            if src in seen:
                continue
            seen.add(src)
            style = rng.choice(("Copy", "Reverse"))
            out.append(SentencePair(src, apply_style(style, src), (style,)))
        return out

    train, test = draw(n_train), draw(n_test)
    return train, test, draw(n_valid)


def synthetic_config(overrides: dict | None = None, file_values: dict | None = None, env=None) -> RunConfig:
    values = {k: str(v) for k, v in DEFAULTS.items()}
    values.update(file_values or {})
    return build_config(values, overrides, env)


def flipped(hyp, src, style) -> bool:
    """Output under the opposite style token matches that style's result better than the original's."""
    want, orig = apply_style(other_style(style), src), apply_style(style, src)
    hyp = tuple(hyp)
    if want == orig:
        return hyp == want
    score = lambda ref: sum(a == b for a, b in zip(hyp, ref)) - abs(len(hyp) - len(ref))
    return score(want) > score(orig)


@dataclass
class SyntheticResult:
    bleu1: float
    bleu4: float
    flip_rate: float
    exact_match: float
    seconds: float
    checkpoint: str
    report: str = ""
    thresholds: dict = field(default_factory=lambda: {"bleu1": BLEU1_MIN, "bleu4": BLEU4_MIN, "flip": FLIP_MIN})

    @property
    def passed(self) -> bool:
        return self.bleu1 >= BLEU1_MIN and self.bleu4 >= BLEU4_MIN and self.flip_rate >= FLIP_MIN

    def summary(self) -> str:
        mark = lambda ok: "PASS" if ok else "FAIL"
        return "\n".join([
            f"{mark(self.bleu1 >= BLEU1_MIN)} bleu1 {self.bleu1:.4f} >= {BLEU1_MIN}",
            f"{mark(self.bleu4 >= BLEU4_MIN)} bleu4 {self.bleu4:.4f} >= {BLEU4_MIN}",
            f"{mark(self.flip_rate >= FLIP_MIN)} style flip {self.flip_rate:.4f} >= {FLIP_MIN}",
            f"exact match {self.exact_match:.4f}; {self.seconds:.0f}s",
        ])


def run_synthetic(out_dir, config: RunConfig | None = None, train: bool = True) -> SyntheticResult:
    """Build the task, train the multitask model, generate for held-out inputs and score.

    ``train=False`` scores the untrained initial parameters.
    """
    config = config or synthetic_config()
    out_dir = Path(out_dir)
    start = time.time()
    seed = config.train.seed
    train_pairs, test_pairs, valid_pairs = make_task(seed)
    counts = count_tokens(train_pairs)
    vocab = build_vocab(train_pairs)
    dataset = SplitDataset(train_pairs, valid_pairs, test_pairs)
    if not train:
        config = build_config({**config.to_flat(), "max_steps": "0"}, env={})
    trainer = Trainer(config, vocab, dataset, counts)
    result = trainer.fit(out_dir / "run", progress_every=500)
    bundle = load_bundle(result.last_checkpoint)

    rows = [(p.source, p.transfers, ()) for p in test_pairs]
    hyps = transfer_batch(bundle, rows, seed=seed, preprocess_input=False)
    refs = [list(p.target) for p in test_pairs]
    flip_rows = [(p.source, (other_style(p.transfers[0]),), ()) for p in test_pairs]
    flip_hyps = transfer_batch(bundle, flip_rows, seed=seed + 1, preprocess_input=False)

    report = evaluate_corpus(hyps, refs, [p.transfers[0] for p in test_pairs])
    res = SyntheticResult(
        bleu1=bleu_n(hyps, refs, 1),
        bleu4=bleu_n(hyps, refs, 4),
        flip_rate=sum(flipped(h, p.source, p.transfers[0]) for h, p in zip(flip_hyps, test_pairs)) / len(test_pairs),
        exact_match=sum(h == r for h, r in zip(hyps, refs)) / len(refs),
        seconds=time.time() - start,
        checkpoint=str(result.last_checkpoint),
        report=report.to_text(),
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "report.csv")
    with open(out_dir / "hypotheses.tsv", "w", encoding="utf-8") as f:
        for p, h, fh in zip(test_pairs, hyps, flip_hyps):
            f.write(f"{p.transfers[0]}\t{' '.join(p.source)}\t{' '.join(h)}\t{' '.join(fh)}\n")
    (out_dir / "summary.json").write_text(json.dumps(
        {"bleu1": res.bleu1, "bleu4": res.bleu4, "flip_rate": res.flip_rate, "exact_match": res.exact_match,
         "passed": res.passed, "seconds": res.seconds}, indent=2))
    log.info("synthetic benchmark:\n%s", res.summary())
    return res
