"""Single-file binary checkpoint container.

Layout: 16-byte header (8-byte magic, u32 little-endian format version, 4
reserved zero bytes), then length-prefixed records in write order:

    u32 key length | key (utf-8) | u8 dtype code | u8 ndim | ndim * u64 dims
    | u64 payload bytes | payload (little-endian)

Metadata (training step, best validation F1, config snapshot text) is stored
as reserved-key records before the parameter tensors, so save -> load -> save
is byte-identical.
"""

import io
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import CheckpointVersionError

MAGIC = b"CTMACKPT"
VERSION = 1

_DTYPE_CODES = {
    np.dtype("float32"): 0,
    np.dtype("float64"): 1,
    np.dtype("int64"): 2,
    np.dtype("uint8"): 3,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_TEXT_CODE = 255

_KEY_STEP = "__meta__.step"
_KEY_BEST = "__meta__.best_val_f1"
_KEY_CONFIG = "__meta__.config"


@dataclass
class Checkpoint:
    state: "OrderedDict[str, torch.Tensor]" = field(default_factory=OrderedDict)
    step: int = 0
    best_val_f1: float = 0.0
    config_text: str = ""
    version: int = VERSION

    @classmethod
    def from_model(cls, model: torch.nn.Module, step: int = 0,
                   best_val_f1: float = 0.0, config_text: str = "") -> "Checkpoint":
        state = OrderedDict(
            (k, v.detach().clone()) for k, v in model.state_dict().items()
        )
        return cls(state=state, step=step, best_val_f1=best_val_f1,
                   config_text=config_text)

    def load_into(self, model: torch.nn.Module):
        model.load_state_dict(self.state)
        return model


def _write_record(buf, key: str, code: int, dims, payload: bytes):
    kb = key.encode("utf-8")
    buf.write(struct.pack("<I", len(kb)))
    buf.write(kb)
    buf.write(struct.pack("<BB", code, len(dims)))
    for d in dims:
        buf.write(struct.pack("<Q", d))
    buf.write(struct.pack("<Q", len(payload)))
    buf.write(payload)


def _tensor_payload(t: torch.Tensor):
    arr = t.detach().cpu().contiguous().numpy()
    dt = arr.dtype
    if dt not in _DTYPE_CODES:
        raise TypeError(f"unsupported checkpoint tensor dtype {dt}")
    le = arr.astype(dt.newbyteorder("<"), copy=False)
    return _DTYPE_CODES[dt], arr.shape, le.tobytes()


def save_checkpoint(ckpt: Checkpoint, path: str):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", ckpt.version))
    buf.write(b"\x00\x00\x00\x00")
    _write_record(buf, _KEY_STEP, 2, (),
                  struct.pack("<q", ckpt.step))
    _write_record(buf, _KEY_BEST, 1, (),
                  struct.pack("<d", ckpt.best_val_f1))
    _write_record(buf, _KEY_CONFIG, _TEXT_CODE, (),
                  ckpt.config_text.encode("utf-8"))
    for key, tensor in ckpt.state.items():
        code, dims, payload = _tensor_payload(tensor)
        _write_record(buf, key, code, dims, payload)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def _read_exact(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise CheckpointVersionError("truncated checkpoint file")
    return b


def load_checkpoint(path: str) -> Checkpoint:
    ckpt = Checkpoint()
    with open(path, "rb") as f:
        if _read_exact(f, 8) != MAGIC:
            raise CheckpointVersionError(f"{path} is not a checkpoint file")
        version = struct.unpack("<I", _read_exact(f, 4))[0]
        if version != VERSION:
            raise CheckpointVersionError(
                f"unsupported checkpoint version {version} (expected {VERSION})"
            )
        ckpt.version = version
        _read_exact(f, 4)
        while True:
            head = f.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointVersionError("truncated checkpoint record")
            klen = struct.unpack("<I", head)[0]
            key = _read_exact(f, klen).decode("utf-8")
            code, ndim = struct.unpack("<BB", _read_exact(f, 2))
            dims = tuple(
                struct.unpack("<Q", _read_exact(f, 8))[0] for _ in range(ndim)
            )
            nbytes = struct.unpack("<Q", _read_exact(f, 8))[0]
            payload = _read_exact(f, nbytes)
            if key == _KEY_STEP:
                ckpt.step = struct.unpack("<q", payload)[0]
            elif key == _KEY_BEST:
                ckpt.best_val_f1 = struct.unpack("<d", payload)[0]
            elif key == _KEY_CONFIG:
                ckpt.config_text = payload.decode("utf-8")
            else:
                if code not in _CODE_DTYPES:
                    raise CheckpointVersionError(f"unknown dtype code {code} for {key}")
                dt = _CODE_DTYPES[code]
                arr = np.frombuffer(payload, dtype=dt.newbyteorder("<")).astype(dt)
                ckpt.state[key] = torch.from_numpy(arr.reshape(dims).copy())
    return ckpt
