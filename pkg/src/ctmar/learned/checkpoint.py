"""Parameter checkpoint: magic line, JSON header line, raw little-endian float32 blobs."""

import json
from pathlib import Path

import numpy as np

from .networks import DiscriminatorSpec, GeneratorSpec, Network

MAGIC = b"DMARW1\n"


class CheckpointError(ValueError):
    pass


def _tensors(prefix, net):
    for kind in ("params", "buffers"):
        for name, arr in getattr(net, kind).items():
            yield f"{prefix}:{kind}:{name}", arr


def save_checkpoint(path, generator, discriminator=None, schedule=None, iteration=0):
    entries = list(_tensors("G", generator))
    if discriminator is not None:
        entries += list(_tensors("D", discriminator))
    header = {
        "generator_spec": generator.spec.to_dict(),
        "discriminator_spec": discriminator.spec.to_dict() if discriminator is not None else None,
        "input_hw": list(generator.input_hw),
        "schedule": schedule.to_dict() if schedule is not None else None,
        "seed": schedule.seed if schedule is not None else None,
        "iteration": int(iteration),
        "tensors": [[name, list(arr.shape)] for name, arr in entries],
    }
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for _, arr in entries:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns ``(generator, discriminator_or_None, header)``."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad checkpoint magic")
    end = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC) : end])
    offset = end + 1
    nets = {
        "G": Network(GeneratorSpec.from_dict(header["generator_spec"]), {}, {}, tuple(header["input_hw"])),
    }
    if header.get("discriminator_spec"):
        nets["D"] = Network(DiscriminatorSpec.from_dict(header["discriminator_spec"]), {}, {}, tuple(header["input_hw"]))
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated payload at {name}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float32).reshape(shape)
        offset += nbytes
        net, kind, key = name.split(":", 2)
        getattr(nets[net], kind)[key] = arr
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes after payload")
    return nets["G"], nets.get("D"), header
