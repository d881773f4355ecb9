"""Checkpoint bundles in `.npz` form.

Layout:
  header             0-d unicode array holding the JSON header
  <net>.flat         flat parameter vector of network <net>
  <net>.adam_m/.adam_v  Adam moments, when an optimizer state was saved

Writes go to a temporary file in the target directory followed by os.replace.
"""

import json
import logging
import os
import tempfile
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from dynreg.exceptions import CheckpointCorruptError, CheckpointError, CheckpointVersionError
from humanoid_model.loaders import first_error

from .models import PolicyParams
from .serializer import CheckpointHeaderSerializer

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Checkpoint:
    kind: str
    networks: dict
    optimizers: dict = field(default_factory=dict)
    rng_state: dict = None
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def rng(self):
        """Generator restored from the saved bit-generator state, or None."""
        if self.rng_state is None:
            return None
        bit_generator = getattr(np.random, self.rng_state["bit_generator"])()
        bit_generator.state = self.rng_state
        return np.random.Generator(bit_generator)

    def network(self, name):
        try:
            return self.networks[name]
        except KeyError:
            raise CheckpointError(f"{self.kind} checkpoint has no network {name!r}") from None


def save_checkpoint(path, checkpoint):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": settings.FORMAT_VERSION,
        "kind": checkpoint.kind,
        "networks": {
            name: {"shapes": {k: list(v) for k, v in params.shapes.items()}, "log_std": params.log_std.tolist(),
                   "size": params.size}
            for name, params in checkpoint.networks.items()
        },
        "optimizers": {name: {"t": int(state["t"]), "lr": float(state.get("lr", 0.0))}
                       for name, state in checkpoint.optimizers.items()},
        "rng_state": checkpoint.rng_state,
        "config_hash": checkpoint.config_hash,
        "extra": checkpoint.extra,
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    for name, params in checkpoint.networks.items():
        arrays[f"{name}.flat"] = params.flat
    for name, state in checkpoint.optimizers.items():
        arrays[f"{name}.adam_m"] = state["m"]
        arrays[f"{name}.adam_v"] = state["v"]

    handle = tempfile.NamedTemporaryFile(dir=path.parent, prefix=path.name, suffix=".tmp", delete=False)
    try:
        with handle:
            np.savez(handle, **arrays)
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    logger.info("saved %s checkpoint to %s", checkpoint.kind, path)
    return path


def load_checkpoint(path, kind=None):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointCorruptError(f"cannot read checkpoint {path}: {exc}") from exc
    if "header" not in arrays:
        raise CheckpointCorruptError(f"checkpoint {path} has no header")
    try:
        raw = json.loads(str(arrays["header"]))
    except json.JSONDecodeError as exc:
        raise CheckpointCorruptError(f"checkpoint {path} header is not JSON: {exc}") from exc

    serializer = CheckpointHeaderSerializer(data=raw)
    if not serializer.is_valid():
        key, message, code = first_error(serializer.errors)
        error_class = CheckpointVersionError if code == "version" else CheckpointCorruptError
        raise error_class(f"checkpoint {path}: {key}: {message}")
    header = serializer.validated_data
    if kind is not None and header["kind"] != kind:
        raise CheckpointError(f"checkpoint {path} holds a {header['kind']!r} bundle, expected {kind!r}")

    networks = {}
    for name, spec in header["networks"].items():
        flat = arrays.get(f"{name}.flat")
        if flat is None or flat.size != spec["size"]:
            raise CheckpointCorruptError(f"checkpoint {path}: parameters of {name!r} are missing or truncated")
        networks[name] = PolicyParams(spec["shapes"], flat, spec["log_std"], raw["format_version"])
    optimizers = {}
    for name, spec in header["optimizers"].items():
        m, v = arrays.get(f"{name}.adam_m"), arrays.get(f"{name}.adam_v")
        if m is None or v is None:
            raise CheckpointCorruptError(f"checkpoint {path}: optimizer moments of {name!r} are missing")
        optimizers[name] = {"m": m, "v": v, "t": spec["t"], "lr": spec["lr"]}
    return Checkpoint(
        kind=header["kind"],
        networks=networks,
        optimizers=optimizers,
        rng_state=raw.get("rng_state"),
        config_hash=header["config_hash"],
        extra=raw.get("extra", {}),
    )
