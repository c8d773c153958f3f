"""Write activation containers that `mdprobe` can load.

Layout: a directory with ``manifest.json``, ``phi_plus.bin`` and
``phi_minus.bin`` (row-major little-endian float32) and, when labels are
given, ``labels.bin`` (one byte per pair, 0 or 1).
"""

import json
import math
import os
import shutil
import struct
import tempfile

CONTAINER_VERSION = 1
DTYPE = "f32le"

ARCHITECTURES = ("encoder-only", "decoder-only", "encoder-decoder")
TOKEN_RULES = ("last", "mean")


class ContainerError(ValueError):
    pass


def _rows(matrix, name):
    rows = [list(map(float, row)) for row in matrix]
    if not rows:
        raise ContainerError(f"{name} has no rows")
    d = len(rows[0])
    if d == 0 or any(len(r) != d for r in rows):
        raise ContainerError(f"{name} is ragged or has zero width")
    return rows


def _encode(rows, name):
    out = bytearray()
    for i, row in enumerate(rows):
        for j, x in enumerate(row):
            try:
                packed = struct.pack("<f", x)
            except OverflowError:
                packed = None
            if packed is None or not math.isfinite(struct.unpack("<f", packed)[0]):
                raise ContainerError(f"{name}[{i}][{j}] = {x} is not a finite float32")
            out += packed
    return bytes(out)


def extraction_meta(model_id, architecture, layer, token_rule="last", dataset_id=None, template_id=None,
                    revision=None, seed=None):
    """Container metadata describing how the activations were produced."""
    if architecture not in ARCHITECTURES:
        raise ContainerError(f"architecture must be one of {ARCHITECTURES}")
    if token_rule not in TOKEN_RULES:
        raise ContainerError(f"token_rule must be one of {TOKEN_RULES}")
    meta = {
        "model_id": model_id,
        "architecture": architecture,
        "layer": str(layer),
        "token_rule": token_rule,
        "precision": "float32",
    }
    for key, value in [("dataset_id", dataset_id), ("template_id", template_id),
                       ("model_revision", revision), ("seed", seed)]:
        if value is not None:
            meta[key] = str(value)
    return meta


def write_container(path, phi_plus, phi_minus, labels=None, meta=None):
    """Write a container to ``path`` atomically (temp dir, then rename).

    An existing directory at ``path`` is replaced.
    """
    plus = _rows(phi_plus, "phi_plus")
    minus = _rows(phi_minus, "phi_minus")
    n, d = len(plus), len(plus[0])
    if (len(minus), len(minus[0])) != (n, d):
        raise ContainerError(f"phi_minus is {len(minus)}x{len(minus[0])}, expected {n}x{d}")
    if labels is not None:
        labels = [int(y) for y in labels]
        if len(labels) != n or any(y not in (0, 1) for y in labels):
            raise ContainerError("labels must be n values in {0, 1}")
    meta = {str(k): str(v) for k, v in (meta or {}).items()}

    manifest = {
        "version": CONTAINER_VERSION,
        "n": n,
        "d": d,
        "dtype": DTYPE,
        "normalized": False,
        "labels_present": labels is not None,
        "meta": dict(sorted(meta.items())),
    }
    blobs = {"phi_plus.bin": _encode(plus, "phi_plus"), "phi_minus.bin": _encode(minus, "phi_minus")}
    if labels is not None:
        blobs["labels.bin"] = bytes(labels)

    path = os.path.abspath(path)
    parent = os.path.dirname(path)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".container-", dir=parent)
    try:
        with open(os.path.join(tmp, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2)
            f.write("\n")
        for name, data in blobs.items():
            with open(os.path.join(tmp, name), "wb") as f:
                f.write(data)
        if os.path.isdir(path):
            shutil.rmtree(path)
        os.rename(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path
