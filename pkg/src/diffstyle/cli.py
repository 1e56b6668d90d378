"""``diffstyle`` command line: preprocess, train, generate, eval, synthetic."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import corpus
from .config import load_config, read_config_file
from .corpus import CorpusError, SplitDataset, TRANSFERS
from .metrics import evaluate_corpus
from .sampler import load_bundle, transfer_batch
from .synthetic import run_synthetic, synthetic_config
from .tokenizer import Vocabulary, build_vocab
from .trainer import Trainer

log = logging.getLogger("diffstyle")

SPLITS = ("train", "valid", "test")
TENSE = {"ToFuture", "ToPresent", "ToPast", "NoTenseChange"}
COMPOSITIONS = {
    "TenseVoice": (TENSE, {"ActiveToPassive", "PassiveToActive", "NoVoiceChange"}),
    "TensePPRemoval": (TENSE, {"PPRemoval", "NoPPRemoval"}),
}


class CliError(Exception):
    pass


def _overrides(args) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        out["seed"] = str(args.seed)
    if getattr(args, "mode", None) is not None:
        out["mode"] = args.mode
    return out


def _write_rows(path: Path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(corpus.format_row(p) + "\n")


def _read_pairs(path: Path) -> list[corpus.SentencePair]:
    pairs = []
    for lineno, (transfers, extra, source, target) in enumerate(corpus.read_rows(path), start=1):
        if target is None:
            raise CliError(f"{path}:{lineno}: missing target column")
        pairs.append(corpus.SentencePair(source, target, transfers, extra))
    return pairs


def cmd_preprocess(args) -> int:
    raw, out = Path(args.raw_dir), Path(args.out)
    if not raw.is_dir():
        raise CliError(f"input directory not found: {raw}")
    files = sorted(raw.glob("*.tsv"))
    if not files:
        raise CliError(f"no *.tsv pair files in {raw}")
    seed = args.seed if args.seed is not None else 0
    splits = {}
    for path in files:
        splits[path.stem] = corpus.split(corpus.load_pairs(path), seed=seed)
    counts = corpus.count_tokens(p for s in splits.values() for p in s.train)
    merged = {name: [corpus.preprocess_pair(p, counts) for s in splits.values() for p in getattr(s, name)]
              for name in SPLITS}

    out.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        _write_rows(out / f"{name}.tsv", merged[name])
    corpus.write_manifest(out / "split_manifest.txt", {stem: s.indices for stem, s in splits.items()})
    build_vocab(merged["train"]).save(out / "vocab.txt")
    with open(out / "train_counts.tsv", "w", encoding="utf-8") as f:
        for tok in sorted(counts):
            f.write(f"{tok}\t{counts[tok]}\n")
    log.info("wrote %s: %s pairs", out, "/".join(str(len(merged[n])) for n in SPLITS))
    return 0


def _select(pairs, mode: str):
    kind, _, arg = mode.partition(":")
    if kind == "multitask":
        return pairs
    if kind == "single":
        if arg not in TRANSFERS:
            raise CliError(f"unknown transfer {arg!r}; valid names: {', '.join(TRANSFERS)}")
        return [p for p in pairs if p.transfers == (arg,)]
    if kind == "compositional":
        if arg not in COMPOSITIONS:
            raise CliError(f"unknown composition {arg!r}; valid names: {', '.join(COMPOSITIONS)}")
        first, second = COMPOSITIONS[arg]
        return [p for p in pairs if len(p.transfers) == 2
                and p.transfers[0] in first and p.transfers[1] in second]
    raise CliError(f"unknown mode {mode!r}; expected single:<transfer>, multitask or compositional:<dataset>")


def _read_counts(path: Path) -> dict:
    counts = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            tok, _, n = line.rpartition("\t")
            counts[tok] = int(n)
    return counts


def cmd_train(args) -> int:
    config = load_config(args.config, _overrides(args))
    data = Path(args.data)
    if not data.is_dir():
        raise CliError(f"data directory not found: {data}")
    sets = {name: _select(_read_pairs(data / f"{name}.tsv"), config.mode) for name in ("train", "valid")}
    if not sets["train"]:
        raise CliError(f"no training pairs in {data} for mode {config.mode}")
    vocab = Vocabulary.load(data / "vocab.txt")
    trainer = Trainer(config, vocab, SplitDataset(sets["train"], sets["valid"], []),
                      _read_counts(data / "train_counts.tsv"))
    result = trainer.fit(Path(args.out), resume_from=args.resume, progress_every=args.log_every)
    log.info("last checkpoint %s; best %s", result.last_checkpoint, result.best_checkpoint)
    print(result.last_checkpoint)
    return 0


def cmd_generate(args) -> int:
    bundle = load_bundle(args.checkpoint)
    rows = corpus.read_rows(args.input)
    hyps = transfer_batch(bundle, [(src, tr, ex) for tr, ex, src, _ in rows], seed=args.seed or 0)
    with open(args.input, encoding="utf-8") as f:
        lines = [line.rstrip("\n").rstrip("\r") for line in f if line.strip()]
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    with open(args.output, "w", encoding="utf-8") as f:
        for line, hyp in zip(lines, hyps):
            f.write(f"{line}\t{' '.join(hyp)}\n")
    return 0


def _last_column(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n").rstrip("\r").split("\t")[-1] for line in f if line.strip()]


def cmd_eval(args) -> int:
    hyps = [h.split() for h in _last_column(args.hyp)]
    rows = corpus.read_rows(args.ref)
    if len(hyps) != len(rows):
        raise CliError(f"line count mismatch: {args.hyp} has {len(hyps)}, {args.ref} has {len(rows)}")
    if any(r[3] is None for r in rows):
        raise CliError(f"{args.ref}: reference rows need a target column")
    labels = ["+".join(r[0]) or "none" for r in rows]
    report = evaluate_corpus(hyps, [list(r[3]) for r in rows], labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "report.csv")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


def cmd_synthetic(args) -> int:
    file_values = read_config_file(args.config) if args.config else None
    config = synthetic_config(_overrides(args), file_values)
    result = run_synthetic(Path(args.out), config, train=not args.untrained)
    print(result.summary())
    print(result.report)
    if args.untrained:
        return 0
    return 0 if result.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffstyle", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        if mode:
            p.add_argument("--mode", help="single:<transfer> | multitask | compositional:<dataset>")

    p = sub.add_parser("preprocess", help="split, normalise and build the vocabulary")
    p.add_argument("raw_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a denoiser on preprocessed data")
    p.add_argument("data", help="output directory of `preprocess`")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint directory to resume from")
    p.add_argument("--log-every", type=int, default=100)
    common(p, mode=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate hypotheses for a TSV of inputs")
    p.add_argument("checkpoint")
    p.add_argument("input", help="rows: transfers<TAB>extra_info<TAB>source[<TAB>target]")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score hypotheses against references")
    p.add_argument("hyp", help="TSV whose last column is the hypothesis")
    p.add_argument("ref", help="reference rows with a target column")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synthetic", help="copy-vs-reverse desk benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--untrained", action="store_true", help="score initial parameters only")
    common(p, mode=True)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (CliError, CorpusError, FileNotFoundError, KeyError, ValueError, OSError) as e:
        print(f"diffstyle {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
