"""Flat tensor checkpoints: a text manifest plus one little-endian float32 payload."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

MANIFEST = "manifest.txt"
PAYLOAD = "payload.bin"
_DTYPE = np.dtype("<f4")


def save_tensors(directory, tensors: dict[str, torch.Tensor], meta: dict[str, str] | None = None) -> Path:
    """Write ``tensors`` in insertion order. Manifest rows are ``key<TAB>shape<TAB>dtype<TAB>offset``
    with offsets in bytes; ``meta`` goes first as ``# key=value`` lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offset = 0
    rows = []
    with open(directory / PAYLOAD, "wb") as f:
        for key, tensor in tensors.items():
            if "\t" in key or "\n" in key:
                raise ValueError(f"invalid tensor key {key!r}")
            arr = np.array(tensor.detach().cpu().numpy(), dtype=_DTYPE, order="C")
            f.write(arr.tobytes())
            shape = "x".join(map(str, arr.shape)) or "scalar"
            rows.append(f"{key}\t{shape}\tfloat32\t{offset}")
            offset += arr.nbytes
    with open(directory / MANIFEST, "w", encoding="utf-8") as f:
        for k, v in (meta or {}).items():
            f.write(f"# {k}={v}\n")
        f.write("\n".join(rows) + ("\n" if rows else ""))
    return directory


def load_tensors(directory) -> tuple[dict[str, torch.Tensor], dict[str, str]]:
    directory = Path(directory)
    manifest, payload = directory / MANIFEST, directory / PAYLOAD
    for p in (manifest, payload):
        if not p.exists():
            raise FileNotFoundError(f"checkpoint file missing: {p}")
    data = payload.read_bytes()
    tensors, meta = {}, {}
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
            continue
        try:
            key, shape_s, dtype, offset_s = line.split("\t")
            shape = () if shape_s == "scalar" else tuple(int(s) for s in shape_s.split("x"))
            offset = int(offset_s)
        except ValueError:
            raise ValueError(f"{manifest}:{lineno}: malformed manifest row") from None
        if dtype != "float32":
            raise ValueError(f"{manifest}:{lineno}: unsupported dtype {dtype}")
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * _DTYPE.itemsize
        if end > len(data):
            raise ValueError(f"{manifest}:{lineno}: {key} runs past end of payload")
        arr = np.frombuffer(data, dtype=_DTYPE, count=count, offset=offset).reshape(shape)
        tensors[key] = torch.from_numpy(arr.astype(np.float32))
    return tensors, meta


def save_model(directory, model: torch.nn.Module, optimizer: torch.optim.Optimizer | None = None,
               meta: dict[str, str] | None = None) -> Path:
    tensors = {f"model/{k}": v for k, v in model.state_dict().items()}
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                for k, v in optimizer.state.get(p, {}).items():
                    tensors[f"opt/{names[id(p)]}/{k}"] = torch.as_tensor(v, dtype=torch.float32)
    return save_tensors(directory, tensors, meta)


def load_model(directory, model: torch.nn.Module, optimizer: torch.optim.Optimizer | None = None) -> dict[str, str]:
    tensors, meta = load_tensors(directory)
    state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
    model.load_state_dict(state)
    if optimizer is not None:
        params = dict(model.named_parameters())
        for key, value in tensors.items():
            if not key.startswith("opt/"):
                continue
            name, _, field = key[len("opt/"):].rpartition("/")
            if name not in params:
                raise KeyError(f"optimizer state for unknown parameter {name}")
            optimizer.state[params[name]][field] = value.clone()
    return meta
