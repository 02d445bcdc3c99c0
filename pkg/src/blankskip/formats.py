"""Binary model and trace file formats.

Both formats share the same envelope: 4 magic bytes, a little-endian u16
version, a little-endian u64 header length, a canonical-JSON header, then a
raw little-endian binary blob.  The model header carries the config and a
tensor manifest (name/shape/dtype, plus the scale for INT8 tensors); the blob
holds the tensors in manifest order.  Write -> read -> write is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataFormatError
from .kernels import LstmLayerWeights, QuantTensor
from .model import (
    EncoderWeights,
    JoinerWeights,
    Linear,
    ModelConfig,
    ModelWeights,
    PredictorWeights,
    model_tensors,
    validate_model,
)

MODEL_MAGIC = b"BSKM"
TRACE_MAGIC = b"BSKT"
FORMAT_VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8"), "i8": np.dtype("<i1")}

TRACE_FEATURES = "features"
TRACE_ENC = "enc"


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_envelope(path: Path, magic: bytes, header: dict, blob: bytes) -> None:
    hdr = _canonical_json(header)
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(hdr)))
        f.write(hdr)
        f.write(blob)


def _read_envelope(path: Path, magic: bytes) -> tuple[dict, bytes, int]:
    raw = Path(path).read_bytes()
    if len(raw) < 14:
        raise DataFormatError("file too short for envelope", offset=len(raw))
    if raw[:4] != magic:
        raise DataFormatError(f"bad magic {raw[:4]!r}, expected {magic!r}", offset=0)
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {version}", offset=4)
    (hdr_len,) = struct.unpack_from("<Q", raw, 6)
    if 14 + hdr_len > len(raw):
        raise DataFormatError("header length exceeds file size", offset=6)
    try:
        header = json.loads(raw[14 : 14 + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"header is not valid JSON: {exc}", offset=14) from exc
    return header, raw[14 + hdr_len :], 14 + hdr_len


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def _tensor_bytes(t) -> tuple[dict, bytes]:
    if isinstance(t, QuantTensor):
        arr = np.ascontiguousarray(t.qdata, dtype=_DTYPES["i8"])
        meta = {"shape": list(arr.shape), "dtype": "i8", "scale": float(t.scale)}
        return meta, arr.tobytes()
    arr = np.asarray(t)
    code = "f4" if arr.dtype == np.float32 else "f8"
    arr = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    return {"shape": list(arr.shape), "dtype": code}, arr.tobytes()


def write_model(path, model: ModelWeights) -> None:
    validate_model(model)
    manifest = []
    blob_parts = []
    for name, t in model_tensors(model):
        meta, data = _tensor_bytes(t)
        meta["name"] = name
        manifest.append(meta)
        blob_parts.append(data)
    header = {"config": _config_dict(model.config), "tensors": manifest}
    _write_envelope(Path(path), MODEL_MAGIC, header, b"".join(blob_parts))


def _config_dict(cfg: ModelConfig) -> dict:
    d = asdict(cfg)
    d["encoder_hidden"] = list(cfg.encoder_hidden)
    return d


def _config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["encoder_hidden"] = tuple(d.get("encoder_hidden", ()))
    try:
        return ModelConfig(**d)
    except TypeError as exc:
        raise DataFormatError(f"bad config block: {exc}") from exc


def read_model(path) -> ModelWeights:
    header, blob, blob_off = _read_envelope(Path(path), MODEL_MAGIC)
    if "config" not in header or "tensors" not in header:
        raise DataFormatError("model header missing config/tensors", offset=14)
    cfg = _config_from_dict(header["config"])
    tensors: dict[str, np.ndarray | QuantTensor] = {}
    offset = 0
    for meta in header["tensors"]:
        try:
            name, shape, dtype = meta["name"], tuple(meta["shape"]), meta["dtype"]
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"bad tensor manifest entry: {meta}", offset=14) from exc
        if dtype not in _DTYPES:
            raise DataFormatError(f"unknown dtype {dtype!r} for {name}", offset=14)
        np_dtype = _DTYPES[dtype]
        nbytes = int(np.prod(shape, dtype=np.int64)) * np_dtype.itemsize
        if offset + nbytes > len(blob):
            raise DataFormatError(
                f"tensor {name} truncated: needs {nbytes} bytes", offset=blob_off + offset
            )
        arr = np.frombuffer(blob, dtype=np_dtype, count=int(np.prod(shape, dtype=np.int64)),
                            offset=offset).reshape(shape).copy()
        offset += nbytes
        if dtype == "i8":
            if "scale" not in meta:
                raise DataFormatError(f"INT8 tensor {name} missing scale", offset=14)
            tensors[name] = QuantTensor(arr.astype(np.int8), float(meta["scale"]))
        else:
            tensors[name] = arr
    if offset != len(blob):
        raise DataFormatError(
            f"{len(blob) - offset} trailing bytes after last tensor", offset=blob_off + offset
        )
    model = _assemble(cfg, tensors)
    try:
        validate_model(model)
    except ContractViolation as exc:
        raise DataFormatError(f"inconsistent model: {exc}") from exc
    return model


def _assemble(cfg: ModelConfig, tensors: dict) -> ModelWeights:
    def linear(prefix) -> Linear | None:
        if f"{prefix}.w" not in tensors:
            return None
        return Linear(tensors[f"{prefix}.w"], tensors.get(f"{prefix}.b"))

    def stack(prefix) -> list[Linear] | None:
        layers = []
        i = 0
        while f"{prefix}.{i}.w" in tensors:
            layers.append(linear(f"{prefix}.{i}"))
            i += 1
        return layers or None

    enc = EncoderWeights(stack("encoder") or [])
    lstm = []
    i = 0
    while f"predictor.lstm.{i}.w_x" in tensors:
        try:
            lstm.append(
                LstmLayerWeights(
                    tensors[f"predictor.lstm.{i}.w_x"],
                    tensors[f"predictor.lstm.{i}.w_h"],
                    tensors[f"predictor.lstm.{i}.b"],
                )
            )
        except KeyError as exc:
            raise DataFormatError(f"predictor LSTM layer {i} incomplete") from exc
        i += 1
    if "predictor.embedding" not in tensors or "predictor.start_embedding" not in tensors:
        raise DataFormatError("model missing predictor embedding tensors")
    pred = PredictorWeights(
        embedding=tensors["predictor.embedding"],
        start_embedding=np.asarray(tensors["predictor.start_embedding"]),
        lstm=lstm,
        proj=linear("predictor.proj"),
    )
    joiner = JoinerWeights(
        enc_proj=linear("joiner.enc_proj"),
        pred_proj=linear("joiner.pred_proj"),
        nf_stack=stack("joiner.nf"),
        blank_stack=stack("joiner.blank"),
        nonblank_stack=stack("joiner.nonblank"),
    )
    return ModelWeights(cfg, enc, pred, joiner)


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------


@dataclass
class TraceData:
    """One utterance worth of frames: raw features or precomputed encoder output."""

    kind: str  # "features" or "enc"
    data: np.ndarray  # (T, dim) float32
    frame_duration_ms: float
    vocab_size: int

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def audio_s(self) -> float:
        return self.frames * self.frame_duration_ms / 1000.0


def write_trace(path, trace: TraceData) -> None:
    if trace.kind not in (TRACE_FEATURES, TRACE_ENC):
        raise ContractViolation(f"unknown trace kind {trace.kind!r}")
    data = np.ascontiguousarray(trace.data, dtype=_DTYPES["f4"])
    if data.ndim != 2 or data.shape[0] == 0:
        raise ContractViolation("trace body must be a non-empty (T, dim) array")
    header = {
        "kind": trace.kind,
        "frames": int(data.shape[0]),
        "dim": int(data.shape[1]),
        "frame_duration_ms": float(trace.frame_duration_ms),
        "vocab_size": int(trace.vocab_size),
    }
    _write_envelope(Path(path), TRACE_MAGIC, header, data.tobytes())


def read_trace(path) -> TraceData:
    header, blob, blob_off = _read_envelope(Path(path), TRACE_MAGIC)
    for key in ("kind", "frames", "dim", "frame_duration_ms", "vocab_size"):
        if key not in header:
            raise DataFormatError(f"trace header missing {key!r}", offset=14)
    if header["kind"] not in (TRACE_FEATURES, TRACE_ENC):
        raise DataFormatError(f"unknown trace kind {header['kind']!r}", offset=14)
    T, dim = int(header["frames"]), int(header["dim"])
    expected = T * dim * 4
    if len(blob) != expected:
        raise DataFormatError(
            f"trace body has {len(blob)} bytes, header implies {expected}",
            offset=blob_off + min(len(blob), expected),
        )
    data = np.frombuffer(blob, dtype=_DTYPES["f4"]).reshape(T, dim).copy()
    return TraceData(
        kind=header["kind"],
        data=data,
        frame_duration_ms=float(header["frame_duration_ms"]),
        vocab_size=int(header["vocab_size"]),
    )


def list_traces(directory) -> list[Path]:
    """Trace files under a directory, sorted by name for deterministic order."""
    paths = sorted(Path(directory).glob("*.bskt"))
    if not paths:
        raise DataFormatError(f"no .bskt traces found in {directory}")
    return paths
