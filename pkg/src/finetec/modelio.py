"""Little-endian binary model container.

Layout::

    b"FTC1"                      magic
    u32 section_count
    per section:
        4 bytes  tag             e.g. b"CMPL", b"DYNM", b"FUSE", b"GCNM"
        u32      ndims
        u32 x ndims  dims        architecture integers
        u64      nvalues
        f64 x nvalues            parameters in declaration order, then fitted constants
"""

from __future__ import annotations

import struct

import numpy as np

from .complete import CompletionModel
from .dynamics import DynamicsModel, FusionHead
from .recognize import GcnModel

MAGIC = b"FTC1"


class ModelFileError(ValueError):
    pass


def pack_section(tag: bytes, dims, values) -> bytes:
    if len(tag) != 4:
        raise ValueError("section tags are 4 bytes")
    values = np.ascontiguousarray(values, dtype="<f8")
    head = tag + struct.pack("<I", len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
    return head + struct.pack("<Q", values.size) + values.tobytes()


def write_container(path, sections) -> None:
    blob = MAGIC + struct.pack("<I", len(sections)) + b"".join(pack_section(*s) for s in sections)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_container(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ModelFileError(f"{path}: bad magic {blob[:4]!r}")
    try:
        (count,) = struct.unpack_from("<I", blob, 4)
        pos = 8
        out = {}
        for _ in range(count):
            tag = blob[pos:pos + 4]
            (ndims,) = struct.unpack_from("<I", blob, pos + 4)
            dims = struct.unpack_from(f"<{ndims}I", blob, pos + 8)
            pos += 8 + 4 * ndims
            (n,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            if pos + 8 * n > len(blob):
                raise struct.error(f"section {tag!r} needs {n} values")
            values = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).astype(np.float64)
            pos += 8 * n
            out[tag.decode("ascii")] = (tuple(dims), values)
    except struct.error as exc:
        raise ModelFileError(f"{path}: truncated model file ({exc})") from None
    if pos != len(blob):
        raise ModelFileError(f"{path}: {len(blob) - pos} trailing bytes")
    return out


def _split(values, model, extra: int):
    need = model.num_parameters()
    if values.size != need + extra:
        raise ModelFileError(f"expected {need + extra} values, found {values.size}")
    model.load_flat(values[:need])
    return values[need:]


# ------------------------------------------------------------------ sections

def completion_section(model: CompletionModel):
    return (b"CMPL", (model.embed, model.num_blocks, model.T),
            np.concatenate([model.flat(), [model.coord_scale]]))


def completion_from(dims, values) -> CompletionModel:
    embed, blocks, T = dims
    model = CompletionModel(T, embed, blocks)
    model.coord_scale = float(_split(values, model, 1)[0])
    return model


def dynamics_section(model: DynamicsModel, hidden: int):
    return b"DYNM", (model.n, model.feature_width, hidden), model.flat()


def dynamics_from(dims, values) -> DynamicsModel:
    n, F, H = dims
    model = DynamicsModel(F, H, n=n)
    _split(values, model, 0)
    return model


def fusion_section(head: FusionHead):
    return b"FUSE", (head.width,), np.concatenate([head.flat(), [head.accel_scale]])


def fusion_from(dims, values) -> FusionHead:
    head = FusionHead(dims[0])
    head.accel_scale = float(_split(values, head, 1)[0])
    return head


def gcn_section(model: GcnModel):
    dims = (model.num_classes, model.blocks[0].kernel, *model.channels)
    return b"GCNM", dims, np.concatenate([model.flat(), model.input_scale])


def gcn_from(dims, values) -> GcnModel:
    C, kernel, *channels = dims
    model = GcnModel(C, channels, kernel=kernel)
    model.input_scale = _split(values, model, channels[0]).copy()
    return model


def save_completion(model: CompletionModel, path) -> None:
    write_container(path, [completion_section(model)])


def load_completion(path) -> CompletionModel:
    sections = read_container(path)
    if "CMPL" not in sections:
        raise ModelFileError(f"{path}: no completion section")
    return completion_from(*sections["CMPL"])


def save_stage2(dynamics: DynamicsModel, hidden: int, fusion: FusionHead, gcn: GcnModel, path) -> None:
    write_container(path, [dynamics_section(dynamics, hidden), fusion_section(fusion), gcn_section(gcn)])


def load_stage2(path):
    sections = read_container(path)
    for tag in ("DYNM", "FUSE", "GCNM"):
        if tag not in sections:
            raise ModelFileError(f"{path}: missing section {tag}")
    return (dynamics_from(*sections["DYNM"]), fusion_from(*sections["FUSE"]), gcn_from(*sections["GCNM"]))
