"""Run-directory persistence: JSON, CSV, SVG artifacts and a hash MANIFEST.

Artifacts must be byte-identical for identical (config, seed) regardless of
worker count, so everything here is deterministic: no timestamps, sorted JSON
keys, fixed CSV dialect, shortest round-tripping float strings, and a
MANIFEST listing sha256 digests in sorted-filename order.  All writes happen
in one finalization phase after every value is computed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError


def _jsonable(obj):
    """Recursively convert report objects into plain JSON-compatible data."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        if not np.isfinite(obj):
            raise InvalidInputError(f"non-finite value {obj!r} in report; refusing to serialize")
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _jsonable(float(obj))
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if not isinstance(k, str):
                k = str(k)
            out[k] = _jsonable(v)
        return out
    if hasattr(obj, "to_json_dict"):
        return _jsonable(obj.to_json_dict())
    if hasattr(obj, "__dict__"):
        return _jsonable(dict(obj.__dict__))
    raise InvalidInputError(f"cannot serialize {type(obj).__name__} into a report")


def render_json(report) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2,
                      ensure_ascii=False, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float):
        if not np.isfinite(v):
            raise InvalidInputError(f"non-finite value {v!r} in CSV cell")
        return repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def render_csv(header, rows) -> str:
    """RFC-4180 style: \\r\\n endings, header row, '.' decimal point."""
    buf = io.StringIO()
    writer = csv.writer(buf, dialect="excel", lineterminator="\r\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


@dataclass
class RunArtifacts:
    directory: str
    manifest: dict          # filename -> sha256 hex digest
    manifest_digest: str    # sha256 of the MANIFEST file itself

    def path(self, filename: str) -> str:
        return os.path.join(self.directory, filename)


def run_directory_name(command: str, config_text: str, seed: int) -> str:
    """Deterministic directory name: command plus a digest of (config, seed)."""
    h = hashlib.sha256()
    h.update(config_text.encode("utf-8"))
    h.update(f"|seed={seed}".encode("utf-8"))
    return f"{command}-{h.hexdigest()[:12]}"


def write_run_directory(
    out_root: str,
    command: str,
    config_text: str,
    seed: int,
    files: dict,
    name: Optional[str] = None,
) -> RunArtifacts:
    """Persist one run: config snapshot, given artifacts, MANIFEST.

    files maps filename -> rendered content (text, or bytes for binary
    artifacts).  The snapshot is added as config.ini and the seed as
    seed.txt; the MANIFEST is written last and lists every other file's
    sha256 in sorted-filename order.
    """
    all_files = dict(files)
    if "config.ini" in all_files or "MANIFEST" in all_files:
        raise InvalidInputError("config.ini and MANIFEST are reserved filenames")
    all_files["config.ini"] = config_text
    all_files["seed.txt"] = f"{seed}\n"

    dirname = name if name is not None else run_directory_name(command, config_text, seed)
    directory = os.path.join(out_root, dirname)
    os.makedirs(directory, exist_ok=True)

    manifest = {}
    for fname in sorted(all_files):
        content = all_files[fname]
        data = content if isinstance(content, bytes) else content.encode("utf-8")
        manifest[fname] = hashlib.sha256(data).hexdigest()
        with open(os.path.join(directory, fname), "wb") as fh:
            fh.write(data)

    manifest_text = "".join(f"{digest}  {fname}\n" for fname, digest in manifest.items())
    with open(os.path.join(directory, "MANIFEST"), "wb") as fh:
        fh.write(manifest_text.encode("utf-8"))
    digest = hashlib.sha256(manifest_text.encode("utf-8")).hexdigest()
    return RunArtifacts(directory=directory, manifest=manifest, manifest_digest=digest)


def read_manifest_digest(directory: str) -> str:
    with open(os.path.join(directory, "MANIFEST"), "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
