"""File formats: hypergraph text files, JSON-lines measurements and truth files.

Hypergraph files::

    c free-form comment
    p hcq <n> <m> <k>
    e v1 v2 ... vk        (1-based, m lines)

Measurement files hold one JSON object per line. ``odometry`` records carry
the dead-reckoned trajectory of one robot, every other record is one
measurement. 2-D rotations are angles in radians, 3-D rotations unit
quaternions ``(w, x, y, z)``; covariances are the row-major lower triangle.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, TextIO, Union

import numpy as np
from scipy.spatial.transform import Rotation

from .hypergraph import KUniformHypergraph
from .metrics.families import RelPoseMeasurement, ScalarMeasurement
from .metrics.lie import OdometryChain, PoseWithCov, rot2
from .metrics.range import ChainPoses, RangeMeasurement
from .metrics.visual import ScalelessRelPoseMeasurement

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, msg: str, line: Optional[int] = None, source: str = "<input>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + msg)


# -- hypergraphs -------------------------------------------------------------------


def format_hypergraph(g: KUniformHypergraph, comments: Iterable[str] = ()) -> str:
    out = io.StringIO()
    for c in comments:
        for line in str(c).splitlines() or [""]:
            out.write(f"c {line}".rstrip() + "\n")
    out.write(f"p hcq {g.n} {g.num_edges} {g.k}\n")
    for e in sorted(g.edges):
        out.write("e " + " ".join(str(v + 1) for v in e) + "\n")
    return out.getvalue()


def write_hypergraph(g: KUniformHypergraph, path: PathLike, comments: Iterable[str] = ()) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(format_hypergraph(g, comments))


def parse_hypergraph(text: str, source: str = "<input>") -> KUniformHypergraph:
    g: Optional[KUniformHypergraph] = None
    declared = 0
    seen = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        tag = parts[0]
        if tag == "p":
            if g is not None:
                raise FormatError("second problem line", lineno, source)
            if len(parts) != 5 or parts[1] != "hcq":
                raise FormatError("expected 'p hcq <n> <m> <k>'", lineno, source)
            try:
                n, declared, k = (int(x) for x in parts[2:])
            except ValueError:
                raise FormatError("non-integer field in problem line", lineno, source) from None
            if n < 0 or declared < 0 or k < 2:
                raise FormatError("need n >= 0, m >= 0 and k >= 2", lineno, source)
            g = KUniformHypergraph(n, k)
        elif tag == "e":
            if g is None:
                raise FormatError("edge before problem line", lineno, source)
            try:
                vs = [int(x) - 1 for x in parts[1:]]
            except ValueError:
                raise FormatError("non-integer vertex", lineno, source) from None
            if len(vs) != g.k:
                raise FormatError(f"edge has {len(vs)} vertices, expected {g.k}", lineno, source)
            if any(v < 0 or v >= g.n for v in vs):
                raise FormatError(f"vertex out of range 1..{g.n}", lineno, source)
            if len(set(vs)) != len(vs):
                raise FormatError("repeated vertex in edge", lineno, source)
            g.add_edge(vs)
            seen += 1
        else:
            raise FormatError(f"unknown line tag {tag!r}", lineno, source)
    if g is None:
        raise FormatError("missing 'p hcq' problem line", None, source)
    if seen != declared:
        raise FormatError(f"problem line declares {declared} edges, found {seen}", None, source)
    return g


def read_hypergraph(path: PathLike) -> KUniformHypergraph:
    with open(path) as f:
        return parse_hypergraph(f.read(), str(path))


# -- rotations and covariances ---------------------------------------------------------


def lower_triangle(C) -> list[float]:
    C = np.asarray(C, dtype=float)
    return [float(x) for x in C[np.tril_indices(C.shape[0])]]


def from_lower_triangle(vals, n: int) -> np.ndarray:
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (n * (n + 1) // 2,):
        raise ValueError(f"expected {n * (n + 1) // 2} covariance entries, got {vals.size}")
    C = np.zeros((n, n))
    C[np.tril_indices(n)] = vals
    return C + np.tril(C, -1).T


def rotation_to_json(R):
    R = np.asarray(R, dtype=float)
    if R.shape == (2, 2):
        return float(np.arctan2(R[1, 0], R[0, 0]))
    q = Rotation.from_matrix(R).as_quat()  # x, y, z, w
    return [float(q[3]), float(q[0]), float(q[1]), float(q[2])]


def rotation_from_json(val) -> np.ndarray:
    if isinstance(val, (int, float)):
        return rot2(float(val))
    q = np.asarray(val, dtype=float)
    if q.shape != (4,):
        raise ValueError("3-D rotation must be a quaternion [w, x, y, z]")
    return Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()


# -- measurement files ---------------------------------------------------------------------


@dataclass
class MeasurementFile:
    kind: str
    measurements: list
    chains: dict = field(default_factory=dict)  # robot id -> OdometryChain

    def context(self):
        """Pose context the metric families expect for this measurement kind."""
        if self.kind == "range":
            if 0 not in self.chains:
                raise FormatError("range measurements need an odometry record for robot 0")
            return ChainPoses(self.chains[0])
        if self.kind in ("relpose", "bearing_rot"):
            if 0 not in self.chains or 1 not in self.chains:
                raise FormatError(f"{self.kind} measurements need odometry for robots 0 and 1")
            return self.chains[0], self.chains[1]
        return None


def chain_record(chain: OdometryChain, robot: int) -> dict:
    if chain.dim == 2:
        poses = [[float(t[0]), float(t[1]), rotation_to_json(R)] for R, t in zip(chain.R, chain.t)]
    else:
        poses = [[*map(float, t), *rotation_to_json(R)] for R, t in zip(chain.R, chain.t)]
    return {"type": "odometry", "robot": robot, "poses": poses,
            "step_cov": [lower_triangle(Q) for Q in chain.step_covs]}


def _chain_from_record(rec: dict) -> OdometryChain:
    poses = rec["poses"]
    if not poses:
        raise ValueError("odometry needs at least one pose")
    dim = 2 if len(poses[0]) == 3 else 3
    if dim == 3 and len(poses[0]) != 7:
        raise ValueError("3-D poses are [x, y, z, qw, qx, qy, qz]")
    if dim == 2:
        ts = np.array([p[:2] for p in poses], dtype=float)
        Rs = np.array([rot2(p[2]) for p in poses])
    else:
        ts = np.array([p[:3] for p in poses], dtype=float)
        Rs = np.array([rotation_from_json(p[3:]) for p in poses])
    dof = 3 if dim == 2 else 6
    covs = np.array([from_lower_triangle(c, dof) for c in rec["step_cov"]]).reshape(-1, dof, dof)
    if len(covs) != len(poses) - 1:
        raise ValueError("need one step covariance per odometry increment")
    return OdometryChain(Rs, ts, covs)


def measurement_record(m) -> dict:
    if isinstance(m, RangeMeasurement):
        return {"type": "range", "pose": m.pose_index, "beacon": m.beacon_id,
                "range": m.range, "var": m.variance}
    if isinstance(m, ScalelessRelPoseMeasurement):
        return {"type": "bearing_rot", "from": [0, m.a_pose], "to": [1, m.b_pose],
                "az": m.azimuth, "el": m.elevation, "rotation": rotation_to_json(m.rotation),
                "cov": lower_triangle(m.cov)}
    if isinstance(m, RelPoseMeasurement):
        return {"type": "relpose", "from": [0, m.a_pose], "to": [1, m.b_pose],
                "rotation": rotation_to_json(m.value.R),
                "translation": [float(x) for x in m.value.t], "cov": lower_triangle(m.value.cov)}
    if isinstance(m, ScalarMeasurement):
        return {"type": "scalar", "value": m.value, "var": m.variance}
    raise TypeError(f"no file format for {type(m).__name__}")


MEASUREMENT_TYPES = ("range", "scalar", "bearing_rot", "relpose")


def _measurement_from_record(rec: dict):
    kind = rec["type"]
    if kind not in MEASUREMENT_TYPES:
        raise ValueError(f"unknown record type {kind!r}")
    if kind == "range":
        return RangeMeasurement(int(rec["pose"]), int(rec["beacon"]), float(rec["range"]),
                                float(rec["var"]))
    if kind == "scalar":
        return ScalarMeasurement(float(rec["value"]), float(rec["var"]))
    a, b = rec["from"], rec["to"]
    if a[0] != 0 or b[0] != 1:
        raise ValueError("inter-robot measurements run from robot 0 to robot 1")
    if kind == "bearing_rot":
        return ScalelessRelPoseMeasurement(int(a[1]), int(b[1]), float(rec["az"]), float(rec["el"]),
                                           rotation_from_json(rec["rotation"]),
                                           from_lower_triangle(rec["cov"], 5))
    t = np.asarray(rec["translation"], dtype=float)
    dof = 3 if len(t) == 2 else 6
    pose = PoseWithCov(rotation_from_json(rec["rotation"]), t, from_lower_triangle(rec["cov"], dof))
    return RelPoseMeasurement(pose, int(a[1]), int(b[1]))


def parse_measurements(text: str, source: str = "<input>") -> MeasurementFile:
    ms, chains, kind = [], {}, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON ({e.msg})", lineno, source) from None
        if not isinstance(rec, dict) or "type" not in rec:
            raise FormatError("record needs a 'type' field", lineno, source)
        try:
            if rec["type"] == "odometry":
                chains[int(rec.get("robot", 0))] = _chain_from_record(rec)
                continue
            m = _measurement_from_record(rec)
        except (KeyError, TypeError, ValueError, IndexError) as e:
            msg = f"missing field {e}" if isinstance(e, KeyError) else str(e)
            raise FormatError(f"bad {rec['type']} record: {msg}", lineno, source) from None
        if kind is None:
            kind = rec["type"]
        elif rec["type"] != kind:
            raise FormatError(f"mixed measurement types ({kind} and {rec['type']})", lineno, source)
        ms.append(m)
    if kind is None:
        raise FormatError("no measurements", None, source)
    return MeasurementFile(kind, ms, chains)


def read_measurements(path: PathLike) -> MeasurementFile:
    with open(path) as f:
        return parse_measurements(f.read(), str(path))


def format_measurements(measurements: Iterable, chains: Optional[dict] = None) -> str:
    lines = [json.dumps(chain_record(c, r)) for r, c in sorted((chains or {}).items())]
    lines += [json.dumps(measurement_record(m)) for m in measurements]
    return "\n".join(lines) + "\n"


def write_measurements(path: PathLike, measurements: Iterable, chains: Optional[dict] = None) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(format_measurements(measurements, chains))


# -- truth files ----------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def write_truth(path: PathLike, labels, ground_truth: dict, spec: Optional[dict] = None) -> None:
    doc = {"labels": [bool(b) for b in labels], "ground_truth": _jsonable(ground_truth),
           "spec": _jsonable(spec or {})}
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def read_truth(path: PathLike) -> dict:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON ({e.msg})", e.lineno, str(path)) from None
    if not isinstance(doc, dict) or "labels" not in doc:
        raise FormatError("truth file needs a 'labels' list", None, str(path))
    return doc


def read_selection(path: PathLike) -> list[int]:
    """0-based indices from a solver result record or a whitespace list of 1-based indices."""
    text = Path(path).read_text()
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            vals = json.loads(stripped)["clique"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise FormatError("expected a result record with a 'clique' list", None, str(path)) from None
    else:
        vals = []
        for lineno, line in enumerate(text.splitlines(), 1):
            for tok in line.replace(",", " ").split():
                try:
                    vals.append(int(tok))
                except ValueError:
                    raise FormatError(f"non-integer index {tok!r}", lineno, str(path)) from None
    out = []
    for v in vals:
        if not isinstance(v, int) or v < 1:
            raise FormatError(f"selection indices are 1-based, got {v!r}", None, str(path))
        out.append(v - 1)
    return out
