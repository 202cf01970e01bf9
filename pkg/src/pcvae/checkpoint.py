"""Binary checkpoint container for a full model state.

Layout, all integers little-endian:

    magic   8 bytes  b"PCVAECKP"
    version u32      currently 1
    count   u32      number of sections
    then per section:
        name_len u16, name utf-8,
        kind     u8   (0 json, 1 float64 array),
        size     u64  payload byte length,
        payload       json: utf-8 text
                      array: ndim u8, dims u32 each, data float64

Arrays are stored verbatim, so save/load round-trips bit for bit: banks and
projections are written out rather than regenerated from seeds.  Optimizer
moments are omitted at epoch 0 where they are identically zero.  Section
names: meta, bank.visual.N, bank.audio.N, decoder.visual.flat,
decoder.audio.flat, proj.{visual,audio}.{p1,p2,py}, opt.m, opt.v.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .decoder import DecoderConfig, DecoderParams, FCSpec, TConvSpec, layer_shapes
from .encoder import EncoderBank
from .errors import CheckpointError
from .infotheory import ProjectionSet
from .numerics import Tensor
from .training import LossConfig, ModelState, TrainConfig

MAGIC = b"PCVAECKP"
VERSION = 1

_KIND_JSON = 0
_KIND_F64 = 1


def _array_payload(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    head = struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.astype("<f8", copy=False).tobytes()


def _sections(state: ModelState):
    meta = {
        "mode": state.mode,
        "epoch_done": state.epoch_done,
        "opt_t": state.opt_t,
        "loss_cfg": asdict(state.loss_cfg),
        "train_cfg": asdict(state.train_cfg),
        "visual_bank": _bank_meta(state.visual_bank),
        "audio_bank": _bank_meta(state.audio_bank),
        "visual_decoder": _decoder_meta(state.visual_params),
        "audio_decoder": _decoder_meta(state.audio_params),
    }
    yield "meta", _KIND_JSON, json.dumps(meta, sort_keys=True).encode("utf-8")
    for label, bank in (("visual", state.visual_bank), ("audio", state.audio_bank)):
        if bank is None:
            continue
        for i, m in enumerate(bank.matrices):
            yield f"bank.{label}.{i}", _KIND_F64, _array_payload(m)
    for label, params in (("visual", state.visual_params), ("audio", state.audio_params)):
        if params is not None:
            yield f"decoder.{label}.flat", _KIND_F64, _array_payload(params.flat())
    for label, proj in (("visual", state.proj_visual), ("audio", state.proj_audio)):
        if proj is not None:
            for part in ("p1", "p2", "py"):
                yield f"proj.{label}.{part}", _KIND_F64, _array_payload(getattr(proj, part))
    if state.epoch_done > 0:
        yield "opt.m", _KIND_F64, _array_payload(state.opt_m)
        yield "opt.v", _KIND_F64, _array_payload(state.opt_v)


def _bank_meta(bank: EncoderBank | None):
    if bank is None:
        return None
    return {
        "modality": bank.modality,
        "in_dim": bank.in_dim,
        "out_dim": bank.out_dim,
        "count": len(bank),
        "seed": bank.seed,
    }


def _decoder_meta(params: DecoderParams | None):
    if params is None:
        return None
    cfg = params.config
    return {
        "name": cfg.name,
        "latent_len": cfg.latent_len,
        "output": list(cfg.output),
        "layers": [asdict(layer) for layer in cfg.layers],
    }


def save_checkpoint(state: ModelState, path) -> None:
    chunks = []
    count = 0
    for name, kind, payload in _sections(state):
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)) + nb)
        chunks.append(struct.pack("<BQ", kind, len(payload)))
        chunks.append(payload)
        count += 1
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, count))
        fh.write(b"".join(chunks))


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.at = 0

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.blob):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.at}, "
                f"file has {len(self.blob)}"
            )
        out = self.blob[self.at : self.at + n]
        self.at += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_array(payload: bytes, name: str) -> np.ndarray:
    cur = _Cursor(payload)
    (ndim,) = cur.unpack("<B")
    dims = cur.unpack(f"<{ndim}I") if ndim else ()
    want = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    data = cur.take(8 * want)
    if cur.at != len(payload):
        raise CheckpointError(f"section {name}: {len(payload) - cur.at} trailing bytes")
    return np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(dims)


def _parse(blob: bytes) -> dict:
    cur = _Cursor(blob)
    if cur.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version, count = cur.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    sections = {}
    for _ in range(count):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        kind, size = cur.unpack("<BQ")
        payload = cur.take(size)
        if kind == _KIND_JSON:
            sections[name] = json.loads(payload.decode("utf-8"))
        elif kind == _KIND_F64:
            sections[name] = _read_array(payload, name)
        else:
            raise CheckpointError(f"section {name}: unknown kind {kind}")
    if cur.at != len(blob):
        raise CheckpointError(f"{len(blob) - cur.at} trailing bytes after last section")
    return sections


def _take_section(sections: dict, name: str):
    if name not in sections:
        raise CheckpointError(f"missing section {name}")
    return sections[name]


def _load_bank(sections, label, meta) -> EncoderBank | None:
    if meta is None:
        return None
    mats = []
    for i in range(meta["count"]):
        m = _take_section(sections, f"bank.{label}.{i}")
        m.setflags(write=False)
        mats.append(m)
    return EncoderBank(
        modality=meta["modality"],
        matrices=tuple(mats),
        out_dim=meta["out_dim"],
        in_dim=meta["in_dim"],
        seed=meta["seed"],
    )


def _config_from_meta(meta) -> DecoderConfig:
    layers = []
    for entry in meta["layers"]:
        entry = dict(entry)
        kind = entry.pop("kind")
        if kind == "tconv":
            layers.append(TConvSpec(**entry))
        elif kind == "fc":
            layers.append(FCSpec(**entry))
        else:
            raise CheckpointError(f"unknown decoder layer kind {kind!r}")
    return DecoderConfig(
        name=meta["name"],
        latent_len=meta["latent_len"],
        layers=tuple(layers),
        output=tuple(meta["output"]),
    )


def _load_decoder(sections, label, meta) -> DecoderParams | None:
    if meta is None:
        return None
    config = _config_from_meta(meta)
    tensors = []
    for layer in config.layers:
        w_shape, b_shape, _ = layer_shapes(layer)
        tensors.append(Tensor(np.zeros(w_shape), requires_grad=True))
        tensors.append(Tensor(np.zeros(b_shape), requires_grad=True))
    params = DecoderParams(config, tensors)
    params.load_flat(_take_section(sections, f"decoder.{label}.flat"))
    return params


def _load_proj(sections, label) -> ProjectionSet | None:
    if f"proj.{label}.p1" not in sections:
        return None
    parts = []
    for part in ("p1", "p2", "py"):
        arr = _take_section(sections, f"proj.{label}.{part}")
        arr.setflags(write=False)
        parts.append(arr)
    return ProjectionSet(*parts)


def load_checkpoint(path) -> ModelState:
    with open(path, "rb") as fh:
        blob = fh.read()
    sections = _parse(blob)
    meta = _take_section(sections, "meta")
    try:
        loss_cfg = LossConfig(**meta["loss_cfg"])
        train_cfg = TrainConfig(**meta["train_cfg"])
        state = ModelState(
            mode=meta["mode"],
            visual_bank=_load_bank(sections, "visual", meta["visual_bank"]),
            audio_bank=_load_bank(sections, "audio", meta["audio_bank"]),
            visual_params=_load_decoder(sections, "visual", meta["visual_decoder"]),
            audio_params=_load_decoder(sections, "audio", meta["audio_decoder"]),
            proj_visual=_load_proj(sections, "visual"),
            proj_audio=_load_proj(sections, "audio"),
            loss_cfg=loss_cfg,
            train_cfg=train_cfg,
            epoch_done=meta["epoch_done"],
            opt_t=meta["opt_t"],
        )
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed meta section: {exc}") from exc
    n = int(sum(p.n_params() for p in state.trainable()))
    if state.epoch_done > 0:
        state.opt_m = np.asarray(_take_section(sections, "opt.m"), dtype=np.float64)
        state.opt_v = np.asarray(_take_section(sections, "opt.v"), dtype=np.float64)
        if state.opt_m.shape != (n,) or state.opt_v.shape != (n,):
            raise CheckpointError("optimizer state does not match parameter count")
    else:
        state.opt_m = np.zeros(n)
        state.opt_v = np.zeros(n)
    return state
