"""Self-describing checkpoint container.

Layout::

    b"HLSTMCKPT\\n"                  magic
    uint64 little-endian             header length in bytes
    header                           UTF-8 JSON: {"arrays": [...], "manifest": {...}}
    payloads                         raw little-endian arrays in header order

Each header array entry is ``{"name", "shape", "dtype", "offset", "nbytes"}``
with ``offset`` relative to the start of the payload section.  ``dtype`` is
``"<f4"`` for float32 models and ``"<f8"`` for float64 ones.  The manifest
holds the model config, vocabulary, aspect tables and any extra values the
caller passes in.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from .data import AspectVocab, Vocab
from .errors import FormatError
from .model import ModelConfig, ModelParams, build_model
from . import tensor as T

MAGIC = b"HLSTMCKPT\n"


@dataclass
class Checkpoint:
    params: ModelParams
    vocab: Vocab
    aspects: AspectVocab
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def model(self):
        return build_model(self.params)


def save_checkpoint(path, params: ModelParams, vocab: Vocab, aspects: AspectVocab, **extra) -> None:
    entries, payloads, offset = [], [], 0
    for name, t in params.items():
        dt = np.dtype(t.dtype).newbyteorder("<")
        blob = np.ascontiguousarray(t.data, dtype=dt).tobytes()
        entries.append({"name": name, "shape": list(t.shape), "dtype": dt.str,
                        "offset": offset, "nbytes": len(blob)})
        payloads.append(blob)
        offset += len(blob)
    manifest = {
        "config": params.config.to_dict(),
        "vocab": vocab.itos,
        "min_count": vocab.min_count,
        "entities": aspects.entities,
        "attributes": aspects.attributes,
        "extra": extra,
    }
    header = json.dumps({"arrays": entries, "manifest": manifest}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path} is not a checkpoint (bad magic)")
    pos = len(MAGIC)
    try:
        (hlen,) = struct.unpack_from("<Q", raw, pos)
        header = json.loads(raw[pos + 8: pos + 8 + hlen].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint header ({exc})") from None
    body = memoryview(raw)[pos + 8 + hlen:]
    manifest = header["manifest"]
    config = ModelConfig(**manifest["config"])
    tensors = {}
    for e in header["arrays"]:
        if e["offset"] + e["nbytes"] > len(body):
            raise FormatError(f"{path}: payload for {e['name']} is truncated")
        arr = np.frombuffer(body[e["offset"]: e["offset"] + e["nbytes"]], dtype=np.dtype(e["dtype"]))
        arr = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
        tensors[e["name"]] = T.parameter(arr, e["name"])
    vocab = Vocab(manifest["vocab"][2:], min_count=manifest.get("min_count", 1))
    aspects = AspectVocab(manifest["entities"][1:], manifest["attributes"][1:])
    return Checkpoint(ModelParams(config, tensors), vocab, aspects, manifest.get("extra", {}))
