#!/usr/bin/env python3
"""
Checkpoint files

Layout (little-endian): magic "PGEN", format version u32, the model config
as five u32 (hidden_dim, emb_dim, vocab_size, max_len, attn_dim), then per
parameter: name length u32, UTF-8 name, rank u32, one u32 per dimension and
the float64 values in row-major order. Parameters run to end of file.
"""
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

try:
    from .corpus import Vocabulary
    from .errors import FormatError
    from .model import ModelConfig, ParameterStore
except ImportError:
    # When running as a script
    from corpus import Vocabulary
    from errors import FormatError
    from model import ModelConfig, ParameterStore

MAGIC = b"PGEN"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<4sI5I")

PathLike = Union[str, Path]


def vocab_path(checkpoint: PathLike) -> Path:
    return Path(f"{checkpoint}.vocab")


def encode_checkpoint(store: ParameterStore) -> bytes:
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, *store.config.as_tuple())]
    for name, value in store.items():
        raw = name.encode("utf-8")
        chunks.append(_U32.pack(len(raw)) + raw)
        chunks.append(_U32.pack(value.ndim) + b"".join(_U32.pack(d) for d in value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(chunks)


def decode_checkpoint(data: bytes) -> ParameterStore:
    if len(data) < _HEADER.size:
        raise FormatError(f"checkpoint too short for header; expected magic {MAGIC!r}")
    magic, version, *dims = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}; expected magic {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}; expected {FORMAT_VERSION}")
    config = ModelConfig(*dims)

    offset = _HEADER.size
    arrays = {}

    def read_u32() -> int:
        nonlocal offset
        if offset + _U32.size > len(data):
            raise FormatError(f"checkpoint truncated at byte {offset}")
        (value,) = _U32.unpack_from(data, offset)
        offset += _U32.size
        return value

    def read_bytes(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise FormatError(f"checkpoint truncated at byte {offset}")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    while offset < len(data):
        try:
            name = read_bytes(read_u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"parameter name at byte {offset} is not UTF-8")
        shape = tuple(read_u32() for _ in range(read_u32()))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(read_bytes(8 * count), dtype="<f8")
        if name in arrays:
            raise FormatError(f"duplicate parameter {name!r} in checkpoint")
        arrays[name] = values.astype(np.float64).reshape(shape)

    try:
        return ParameterStore(config, arrays)
    except Exception as e:
        raise FormatError(f"checkpoint does not match its config: {e}") from e


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path: PathLike, store: ParameterStore, vocab: Optional[Vocabulary] = None) -> Path:
    path = Path(path)
    _atomic_write(path, encode_checkpoint(store))
    if vocab is not None:
        vocab.dump(vocab_path(path))
    return path


def load_checkpoint(path: PathLike) -> Tuple[ParameterStore, Optional[Vocabulary]]:
    """Store plus the vocabulary dump beside it, when present"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read checkpoint {path}: {e}") from e
    store = decode_checkpoint(data)
    vpath = vocab_path(path)
    vocab = Vocabulary.load(vpath) if vpath.exists() else None
    return store, vocab
