"""Line-delimited JSON formats shared by the pipeline stages.

All matrices are serialized as their 6 symmetric entries in the fixed
order [xx, yy, zz, xy, xz, yz]; rotations as 9 row-major entries; every
float at full round-trip precision. Readers report the offending line
number on any schema mismatch.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .inference import InferredStiffness
from .labels import HMapConfig, LabelSet, StiffnessLabel
from .runtime import TrajectoryTick
from .sim import DemoRecord
from .spd import CholeskyParams, Spd3

__all__ = [
    "FormatError",
    "dump_demos",
    "load_demos",
    "dump_inferred",
    "load_inferred",
    "dump_labels",
    "load_labels",
    "dump_trajectory",
    "load_trajectory",
]

LABELS_FORMAT = "varimp-labels/1"


class FormatError(ValueError):
    """A pipeline file does not match its schema; message names the line."""


def _floats(x) -> list[float]:
    return [float(v) for v in np.asarray(x, dtype=float).reshape(-1)]


def _write_lines(path, lines: Iterable[str]) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _read_objects(path) -> Iterable[tuple[int, dict]]:
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
        if not isinstance(obj, dict):
            raise FormatError(f"{path}:{lineno}: expected an object")
        yield lineno, obj


def _field(obj: dict, key: str, path, lineno: int):
    if key not in obj:
        raise FormatError(f"{path}:{lineno}: missing field {key!r}")
    return obj[key]


def _vector(obj: dict, key: str, n: int, path, lineno: int) -> np.ndarray:
    v = _field(obj, key, path, lineno)
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}:{lineno}: field {key!r} is not numeric") from e
    if arr.shape != (n,):
        raise FormatError(
            f"{path}:{lineno}: field {key!r} must have {n} entries, got {arr.shape}"
        )
    return arr


# -- demonstration logs ----------------------------------------------------


def dump_demos(records: Sequence[DemoRecord], path) -> None:
    lines = []
    for r in records:
        lines.append(json.dumps({
            "episode": int(r.episode),
            "t": float(r.t),
            "state": _floats(r.state),
            "force": _floats(r.force),
            "cam_rot": _floats(r.cam_rot),
            "cmd_pos": _floats(r.cmd_pos),
            "act_pos": _floats(r.act_pos),
        }))
    _write_lines(path, lines)


def load_demos(path) -> list[DemoRecord]:
    records = []
    for lineno, obj in _read_objects(path):
        state = _field(obj, "state", path, lineno)
        records.append(DemoRecord(
            episode=int(_field(obj, "episode", path, lineno)),
            t=float(_field(obj, "t", path, lineno)),
            state=np.asarray(state, dtype=float),
            force=_vector(obj, "force", 3, path, lineno),
            cam_rot=_vector(obj, "cam_rot", 9, path, lineno).reshape(3, 3),
            cmd_pos=_vector(obj, "cmd_pos", 3, path, lineno),
            act_pos=_vector(obj, "act_pos", 3, path, lineno),
        ))
    return records


# -- inferred environment stiffness ----------------------------------------


def dump_inferred(inferred: dict[int, InferredStiffness], path) -> None:
    lines = []
    for i in sorted(inferred):
        v = inferred[i]
        lines.append(json.dumps({
            "index": i,
            "k_e": _floats(v.k_e.six()),
            "m_valid": int(v.m_valid),
        }))
    _write_lines(path, lines)


def load_inferred(path) -> dict[int, InferredStiffness]:
    out: dict[int, InferredStiffness] = {}
    for lineno, obj in _read_objects(path):
        six = _vector(obj, "k_e", 6, path, lineno)
        try:
            k_e = Spd3.from_six(six)
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: invalid stiffness: {e}") from e
        out[int(_field(obj, "index", path, lineno))] = InferredStiffness(
            k_e=k_e, m_valid=int(_field(obj, "m_valid", path, lineno))
        )
    return out


# -- stiffness labels -------------------------------------------------------


def dump_labels(label_set: LabelSet, path) -> None:
    header = json.dumps({
        "format": LABELS_FORMAT,
        "kappa_min": float(label_set.kappa_min),
        "kappa_max": float(label_set.kappa_max),
        "cfg": asdict(label_set.cfg),
    })
    lines = [header]
    for lb in label_set.labels:
        lines.append(json.dumps({
            "episode": int(lb.episode),
            "t": float(lb.t),
            "state": _floats(lb.state),
            "frame": lb.frame,
            "params": _floats(lb.params.as_array()),
        }))
    _write_lines(path, lines)


def load_labels(path) -> LabelSet:
    it = iter(_read_objects(path))
    try:
        lineno, header = next(it)
    except StopIteration:
        raise FormatError(f"{path}:1: empty label file") from None
    if header.get("format") != LABELS_FORMAT:
        raise FormatError(
            f"{path}:{lineno}: expected header with format {LABELS_FORMAT!r}"
        )
    cfg_doc = _field(header, "cfg", path, lineno)
    cfg = HMapConfig(eps_h=float(cfg_doc["eps_h"]), p_low=float(cfg_doc["p_low"]),
                     p_high=float(cfg_doc["p_high"]))
    labels = []
    for lineno, obj in it:
        params = _vector(obj, "params", 6, path, lineno)
        labels.append(StiffnessLabel(
            episode=int(_field(obj, "episode", path, lineno)),
            t=float(_field(obj, "t", path, lineno)),
            state=np.asarray(_field(obj, "state", path, lineno), dtype=float),
            frame=str(_field(obj, "frame", path, lineno)),
            params=CholeskyParams.from_array(params),
        ))
    return LabelSet(
        labels=labels,
        kappa_min=float(_field(header, "kappa_min", path, 1)),
        kappa_max=float(_field(header, "kappa_max", path, 1)),
        cfg=cfg,
    )


# -- runtime trajectories ----------------------------------------------------


def dump_trajectory(ticks: Sequence[TrajectoryTick], path) -> None:
    lines = []
    for tk in ticks:
        lines.append(json.dumps({
            "tick": int(tk.tick),
            "t": float(tk.t),
            "mode": tk.mode,
            "cmd_pos": _floats(tk.cmd_pos),
            "act_pos": _floats(tk.act_pos),
            "force": _floats(tk.force),
            "K": _floats(tk.k.six()),
            "D": _floats(tk.d.six()),
            "stop": bool(tk.stop),
            "rot_stiffness": float(tk.rot_stiffness),
            "rot_damping": float(tk.rot_damping),
        }))
    _write_lines(path, lines)


def load_trajectory(path) -> list[dict]:
    """Trajectory rows as dicts (read-back is for inspection and tests)."""
    rows = []
    for lineno, obj in _read_objects(path):
        for key in ("tick", "mode", "cmd_pos", "act_pos", "force", "K", "D"):
            _field(obj, key, path, lineno)
        rows.append(obj)
    return rows
