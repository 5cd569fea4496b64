"""File formats and atomic output directories.

* field tables: CSV with columns ``k1,k2,coefficient`` (nonzero modes, canonical order)
* ``SQGFLD01`` container: 8-byte magic, ``uint32`` array count, then per array
  ``uint16`` name length, UTF-8 name, ``uint32`` rows, ``uint32`` cols and
  ``rows*cols`` little-endian float64 values in row-major order
* trajectory CSV: ``time``, one column per field norm, one per observable
* report CSV/JSON and a run manifest with per-file SHA-256 checksums
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .dynamics import TrajectoryRecord
from .fields import SpectralScalarField
from .lattice import lattice_points

MAGIC = b"SQGFLD01"


class FormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# field tables


def field_to_csv(f: SpectralScalarField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k1", "k2", "coefficient"])
    for k in lattice_points(f.N):
        c = f.coefficient(k)
        if c != 0.0:
            w.writerow([k.k1, k.k2, _fmt(c)])
    return buf.getvalue()


def field_from_csv(text: str, n: int | None = None) -> SpectralScalarField:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["k1", "k2", "coefficient"]:
        raise FormatError("field table must start with the header k1,k2,coefficient")
    modes = {}
    for i, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != 3:
            raise FormatError(f"line {i}: expected 3 columns, got {len(r)}")
        try:
            k = (int(r[0]), int(r[1]))
            v = float(r[2])
        except ValueError as e:
            raise FormatError(f"line {i}: {e}") from None
        if k == (0, 0):
            raise FormatError(f"line {i}: the zero mode is not part of a zero-mean field")
        modes[k] = modes.get(k, 0.0) + v
    if not modes:
        return SpectralScalarField.zeros(n or 1)
    return SpectralScalarField.from_modes(modes, n)


# --------------------------------------------------------------------------
# binary container


def write_container(arrays: dict) -> bytes:
    out = [MAGIC, struct.pack("<I", len(arrays))]
    for name, a in arrays.items():
        a = np.asarray(a, dtype="<f8")
        if a.ndim == 1:
            a = a[None, :]
        if a.ndim != 2:
            raise FormatError(f"array {name!r} must be 1- or 2-dimensional")
        nb = name.encode()
        out += [struct.pack("<H", len(nb)), nb, struct.pack("<II", *a.shape),
                np.ascontiguousarray(a).tobytes()]
    return b"".join(out)


def read_container(data: bytes) -> dict:
    if data[:8] != MAGIC:
        raise FormatError("missing SQGFLD01 header")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("truncated container")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", take(2))
        name = take(ln).decode()
        rows, cols = struct.unpack("<II", take(8))
        out[name] = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
    if pos != len(data):
        raise FormatError("trailing bytes after the last array")
    return out


def snapshot_arrays(rec: TrajectoryRecord, i: int, grid: int | None = None) -> dict:
    """Coefficient boxes (and optionally grid renders) of snapshot ``i``."""
    out = {}
    for f in rec.fields:
        c = rec.snapshots[f][i]
        out[f"{f}/coefficients"] = c
        if grid:
            out[f"{f}/grid"] = SpectralScalarField(rec.N, c).to_grid(grid)
    return out


# --------------------------------------------------------------------------
# trajectories and reports


def trajectory_to_csv(rec: TrajectoryRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    obs = sorted(rec.observables)
    head = ["time"] + [f"norm_{f}" for f in rec.fields] + [f"grad_norm_{f}" for f in rec.fields]
    w.writerow(head + [f"obs_{k}" for k in obs])
    for i, t in enumerate(rec.times):
        row = [_fmt(t)] + [_fmt(rec.l2_norms[f][i]) for f in rec.fields]
        row += [_fmt(rec.grad_norms[f][i]) for f in rec.fields]
        w.writerow(row + [_fmt(rec.observables[k][i]) for k in obs])
    return buf.getvalue()


def report_to_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["radius", "ratio", "mean_distance", "p_hat", "p_low", "p_high", "law_distance", "aborted"])
    for r in report.rows:
        w.writerow([_fmt(r.radius), _fmt(r.ratio), _fmt(r.mean_distance), _fmt(r.p_hat), _fmt(r.p_low),
                    _fmt(r.p_high), _fmt(r.law_distance), r.aborted])
    return buf.getvalue()


def report_to_dict(report, config_hash: str = "", seeds=None) -> dict:
    fit = report.fit._asdict() if report.fit is not None else None
    members = []
    for row, res in zip(report.rows, report.results or [None] * len(report.rows)):
        m = {"radius": row.radius, "ratio": row.ratio, "mean_distance": row.mean_distance,
             "p_hat": row.p_hat, "p_interval": [row.p_low, row.p_high],
             "law_distance": row.law_distance, "law_distances": row.law_distances, "aborted": row.aborted}
        if res is not None:
            m["sample_index"] = res.sample_index.tolist()
            m["distances"] = [None if not np.isfinite(x) else float(x) for x in res.distances]
            m["aborts"] = {str(k): v for k, v in res.aborts.items()}
        members.append(m)
    return {"config_hash": config_hash, "seeds": seeds or {}, "epsilon": report.epsilon,
            "delta": report.delta, "fit": fit, "members": members}


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


# --------------------------------------------------------------------------
# manifests and atomic directories


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def file_inventory(root: Path, exclude=("manifest.json",)) -> dict:
    inv = {}
    for p in sorted(Path(root).rglob("*")):
        if p.is_file() and p.name not in exclude:
            rel = p.relative_to(root).as_posix()
            inv[rel] = {"size": p.stat().st_size, "sha256": sha256_file(p)}
    return inv


def verify_inventory(root: Path, manifest: dict) -> list[str]:
    """Files whose size or checksum disagree with the manifest (empty when consistent)."""
    bad = []
    for rel, meta in manifest.get("files", {}).items():
        p = Path(root) / rel
        if not p.is_file() or p.stat().st_size != meta["size"] or sha256_file(p) != meta["sha256"]:
            bad.append(rel)
    return bad


class OutputDir:
    """Staging directory whose contents appear at ``target`` only on successful commit."""

    def __init__(self, staging: Path):
        self.path = Path(staging)

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        return p

    def write_bytes(self, rel: str, data: bytes) -> Path:
        p = self.path / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)
        return p


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def remove_stale_staging(target) -> list[Path]:
    """Delete staging directories of ``target`` left behind by processes that no longer exist."""
    target = Path(target)
    removed = []
    if not target.parent.is_dir():
        return removed
    for p in target.parent.glob(f".{target.name}.tmp-*"):
        parts = p.name[len(f".{target.name}.tmp-"):].split("-", 1)
        if parts[0].isdigit() and not _pid_alive(int(parts[0])) and p.is_dir():
            shutil.rmtree(p, ignore_errors=True)
            removed.append(p)
    return removed


@contextmanager
def atomic_output(target) -> OutputDir:
    """Write into a sibling staging directory and rename it onto ``target`` on success.

    An existing ``target`` is replaced only after the new contents are complete;
    on any exception (or a killed process) ``target`` is left untouched and no
    partially written directory appears under its name.  Staging directories are
    hidden (``.<name>.tmp-<pid>-*``); ones orphaned by killed processes are removed
    by the next call for the same target.
    """
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    remove_stale_staging(target)
    staging = Path(tempfile.mkdtemp(prefix=f".{target.name}.tmp-{os.getpid()}-", dir=target.parent))
    try:
        yield OutputDir(staging)
        for p in staging.rglob("*"):
            if p.is_file():
                with open(p, "rb") as fh:
                    os.fsync(fh.fileno())
        if target.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{target.name}.old-", dir=target.parent))
            os.rename(target, old / "d")
            os.rename(staging, target)
            shutil.rmtree(old, ignore_errors=True)
        else:
            os.rename(staging, target)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


__all__ = [
    "FormatError", "MAGIC", "OutputDir", "atomic_output", "dumps_json", "field_from_csv", "field_to_csv",
    "file_inventory", "read_container", "remove_stale_staging", "report_to_csv", "report_to_dict", "sha256_file",
    "snapshot_arrays", "trajectory_to_csv", "verify_inventory", "write_container",
]
