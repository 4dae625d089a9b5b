"""Deterministic JSON artifacts with upstream-hash staleness checks.

Every stage output is a JSON document {"meta": ..., "config": ..., "data":
...} written through a canonical serializer: sorted keys, floats at 17
significant digits, LF newline.  Two runs with identical inputs and seed
produce byte-identical files.  meta.inputs records the sha256 of each file
the stage consumed; consumers re-hash those files and refuse to run on a
mismatch.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from typing import Mapping, Optional

from .errors import StaleArtifactError, ValidationError


def _canon(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            raise ValidationError("artifacts cannot contain NaN or infinity")
        if obj == int(obj) and abs(obj) < 1e16:
            return f"{int(obj)}.0"
        return format(obj, ".17g")
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canon(v) for v in obj) + "]"
    if isinstance(obj, Mapping):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(json.dumps(k, ensure_ascii=False) + ":" + _canon(v) for k, v in items) + "}"
    # numpy scalars and arrays land here
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        return _canon(obj.item())
    if hasattr(obj, "tolist"):
        return _canon(obj.tolist())
    raise ValidationError(f"cannot serialize {type(obj).__name__} to canonical JSON")


def canonical_json(obj) -> str:
    return _canon(obj) + "\n"


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_artifact(
    path: str,
    stage: str,
    data: dict,
    config: Optional[dict] = None,
    inputs: Optional[Mapping[str, str]] = None,
) -> None:
    """Write a stage artifact; `inputs` maps logical names to file paths,
    which are hashed at write time."""
    recorded = {}
    for name, in_path in (inputs or {}).items():
        recorded[name] = {"path": str(in_path), "sha256": sha256_file(in_path)}
    document = {
        "meta": {"stage": stage, "inputs": recorded},
        "config": config,
        "data": data,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(document))


def read_artifact(path: str, expect_stage: str, verify_inputs: bool = True) -> dict:
    """Load an artifact, checking its stage tag and that every input file it
    recorded still hashes to the same value."""
    if not os.path.exists(path):
        raise StaleArtifactError(
            f"missing artifact {path}; run the `{expect_stage}` stage first"
        )
    with open(path, encoding="utf-8") as fh:
        document = json.load(fh)
    meta = document.get("meta", {})
    if meta.get("stage") != expect_stage:
        raise StaleArtifactError(
            f"{path} was produced by stage {meta.get('stage')!r}, expected {expect_stage!r}"
        )
    if verify_inputs:
        for name, rec in meta.get("inputs", {}).items():
            in_path = rec["path"]
            if not os.path.exists(in_path):
                raise StaleArtifactError(
                    f"{path} depends on {name} at {in_path}, which no longer exists"
                )
            current = sha256_file(in_path)
            if current != rec["sha256"]:
                raise StaleArtifactError(
                    f"{path} is stale: {name} ({in_path}) changed since it was written; "
                    "re-run the producing stage"
                )
    return document
