import pytest
import torch

from diffstyle.config import build_config
from diffstyle.corpus import SentencePair, SplitDataset, count_tokens, preprocess_pair
from diffstyle.tokenizer import build_vocab

torch.set_num_threads(1)

SMALL = {
    "layers": "1", "heads": "2", "dim": "16", "ff_dim": "32", "cond_len": "8", "target_len": "8",
    "dropout": "0.1", "diffusion_steps": "20", "beta_start": "0.01", "beta_end": "0.5",
    "batch_size": "4", "lr": "1e-3", "warmup_steps": "2", "max_steps": "6",
    "checkpoint_interval": "3", "valid_interval": "3", "seed": "5",
}

RAW = [
    ("he walks to the store every day", "he walked to the store every day", "ToPast"),
    ("she walks to the park every day", "she walked to the park every day", "ToPast"),
    ("he travels to the store every day", "he will travel to the store every day", "ToFuture"),
    ("she travels to the park every day", "she will travel to the park every day", "ToFuture"),
    ("the cat chased the dog", "the dog was chased by the cat", "ActiveToPassive"),
    ("the dog chased the cat", "the cat was chased by the dog", "ActiveToPassive"),
]


@pytest.fixture
def small_config():
    return build_config(SMALL, env={})


@pytest.fixture
def toy_dataset():
    pairs = [SentencePair(tuple(s.split()), tuple(t.split()), (tr,)) for s, t, tr in RAW]
    counts = count_tokens(pairs)
    pairs = [preprocess_pair(p, counts) for p in pairs]
    return SplitDataset(pairs, pairs[:2], pairs[2:3]), build_vocab(pairs), counts


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
