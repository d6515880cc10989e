"""Text formats: strand files, OBJ frame dumps, metrics CSV and summaries.

Strand file grammar (``#`` starts a comment, blank lines are ignored)::

    <N>                 vertex count of the block, N >= 3
    x y z               N lines, metres
    thetas              optional; followed by N-1 lines of edge angles (rad)

Blocks repeat until end of file.  Floats are written with 17 significant
digits so a save/load cycle is exact for doubles.
"""
import csv
import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .elastic import RestShape
from .errors import GeometryError, ParseError, SagFreeError, ValidationError
from .kinematics import StrandGeometry

FLOAT_FMT = "{:.17g}"
METRICS_SCHEMA = "sagfree-metrics v1"
REPORT_SCHEMA = "sagfree-optimizer-report v1"
SUMMARY_SCHEMA = 1
METRICS_COLUMNS = ("frame", "time", "max_drift", "tip_drift", "kinetic_energy")


class IoError(SagFreeError, OSError):
    pass


def fmt(x):
    return FLOAT_FMT.format(float(x))


# --- strand files --------------------------------------------------------------

def _content_lines(text):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def _floats(line, no, count):
    parts = line.split()
    if len(parts) != count:
        raise ParseError(f"expected {count} numbers, got {len(parts)}", no)
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"not a number in {line!r}", no) from None
    if not all(np.isfinite(vals)):
        raise ParseError("non-finite value", no)
    return vals


def parse_strands(text):
    """Parse strand-file text into validated geometries."""
    lines = list(_content_lines(text))
    out, k = [], 0
    while k < len(lines):
        no, head = lines[k]
        try:
            n = int(head)
        except ValueError:
            raise ParseError(f"expected a vertex count, got {head!r}", no) from None
        if n < 3:
            raise ParseError(f"a strand needs at least 3 vertices, got {n}", no)
        k += 1
        if k + n > len(lines):
            raise ParseError(f"block declares {n} vertices but the file ends early", no)
        first_line = lines[k][0]
        pos = np.array([_floats(line, ln, 3) for ln, line in lines[k:k + n]])
        k += n
        thetas = None
        if k < len(lines) and lines[k][1].lower() == "thetas":
            t_no = lines[k][0]
            k += 1
            vals = []
            while k < len(lines) and len(vals) < n - 1:
                ln, line = lines[k]
                if len(line.split()) != 1:
                    break
                vals.append(_floats(line, ln, 1)[0])
                k += 1
            if len(vals) != n - 1:
                raise ParseError(f"thetas section needs {n - 1} values, got {len(vals)}", t_no)
            thetas = np.array(vals)
        try:
            geom = StrandGeometry(pos, thetas).validate()
        except GeometryError as exc:
            # vertex/edge indices are block-relative; report the file line too
            raise ValidationError(f"strand starting at line {first_line}: {exc}") from exc
        out.append(geom)
    if not out:
        raise ParseError("no strand blocks found", None)
    return out


def load_strands(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_strands(text)


def format_strands(geometries):
    rows = []
    for g in geometries:
        rows.append(str(g.n_vertices))
        rows += [" ".join(fmt(c) for c in p) for p in g.positions]
        if np.any(g.thetas != 0):
            rows.append("thetas")
            rows += [fmt(t) for t in g.thetas]
    return "\n".join(rows) + "\n"


def save_strands(path, geometries):
    _write_text(path, format_strands(geometries))


def _write_text(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {path}: {exc}") from exc


# --- frame export ----------------------------------------------------------

def obj_polylines(position_sets):
    """OBJ text with one ``l`` polyline per strand."""
    rows, offset = [], 1
    for strand, pts in enumerate(position_sets):
        rows.append(f"o strand_{strand}")
        rows += ["v " + " ".join(fmt(c) for c in p) for p in pts]
        rows.append("l " + " ".join(str(offset + i) for i in range(len(pts))))
        offset += len(pts)
    return "\n".join(rows) + "\n"


def write_metrics_csv(path, metrics):
    cols = metrics.as_columns() if hasattr(metrics, "as_columns") else metrics
    try:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {METRICS_SCHEMA}\n")
            w = csv.writer(fh)
            w.writerow(METRICS_COLUMNS)
            for k in range(len(cols["time"])):
                w.writerow([int(cols["frame"][k])] + [fmt(cols[c][k]) for c in METRICS_COLUMNS[1:]])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_metrics_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != f"# {METRICS_SCHEMA}":
            raise ParseError(f"unknown metrics schema {header!r}", 1)
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in METRICS_COLUMNS}


def export_frames(trajectories, directory):
    """Write ``frame_%05d.obj`` per frame and ``metrics.csv`` into ``directory``.

    ``trajectories`` is one trajectory or a list (one per strand, equal frame
    counts).  With several strands the CSV holds the worst drift and the
    summed kinetic energy per frame.  Returns the list of OBJ paths.
    """
    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]
    _ensure_dir(directory)
    n_frames = {len(t.q) for t in trajectories}
    if len(n_frames) != 1:
        raise ValidationError("all strands must have the same number of frames")
    paths = []
    for k in range(n_frames.pop()):
        path = os.path.join(directory, f"frame_{k:05d}.obj")
        _write_text(path, obj_polylines([t.positions[k] for t in trajectories]))
        paths.append(path)
    ms = [t.metrics for t in trajectories]
    cols = {
        "frame": np.arange(len(ms[0].time)),
        "time": ms[0].time,
        "max_drift": np.max([m.max_drift for m in ms], axis=0),
        "tip_drift": np.max([m.tip_drift for m in ms], axis=0),
        "kinetic_energy": np.sum([m.kinetic_energy for m in ms], axis=0),
    }
    write_metrics_csv(os.path.join(directory, "metrics.csv"), cols)
    return paths


def write_report_csv(path, report):
    """Per-iteration optimizer records."""
    try:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {REPORT_SCHEMA}\n")
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "grad_norm", "step_norm", "step_length", "halvings"])
            for r in report.records:
                w.writerow([r.iteration, fmt(r.objective), fmt(r.grad_norm), fmt(r.step_norm), fmt(r.step_length), r.halvings])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# --- rest shapes -------------------------------------------------------------

def format_rest_shape(rest):
    rows = [f"lengths {len(rest.lengths)}"]
    rows += [fmt(x) for x in rest.lengths]
    rows.append(f"kappa {len(rest.kappa)}")
    rows += [" ".join(fmt(x) for x in k) for k in rest.kappa]
    rows.append(f"twist {len(rest.twist)}")
    rows += [fmt(x) for x in rest.twist]
    return "\n".join(rows) + "\n"


def parse_rest_shape(text):
    lines = list(_content_lines(text))
    blocks, k = {}, 0
    widths = {"lengths": 1, "kappa": 4, "twist": 1}
    while k < len(lines):
        no, head = lines[k]
        parts = head.split()
        if len(parts) != 2 or parts[0] not in widths:
            raise ParseError(f"expected a section header, got {head!r}", no)
        try:
            count = int(parts[1])
        except ValueError:
            raise ParseError(f"bad count {parts[1]!r}", no) from None
        rows = lines[k + 1:k + 1 + count]
        if len(rows) != count:
            raise ParseError(f"section {parts[0]} ends early", no)
        blocks[parts[0]] = np.array([_floats(line, ln, widths[parts[0]]) for ln, line in rows])
        k += 1 + count
    missing = set(widths) - set(blocks)
    if missing:
        raise ParseError(f"missing sections {sorted(missing)}", None)
    try:
        return RestShape(blocks["lengths"].ravel(), blocks["kappa"], blocks["twist"].ravel())
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def save_rest_shape(path, rest):
    _write_text(path, format_rest_shape(rest))


def load_rest_shape(path):
    try:
        with open(path) as fh:
            return parse_rest_shape(fh.read())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


# --- summary -----------------------------------------------------------------

@dataclass
class MetricsSummary:
    residual_minv_before: float = float("nan")
    residual_l2_before: float = float("nan")
    residual_minv_after: float = float("nan")
    residual_l2_after: float = float("nan")
    max_drift: float = float("nan")
    tip_displacement: float = float("nan")
    iterations: int = 0
    wall_time: float = float("nan")
    matrix_min: float = float("nan")
    matrix_max: float = float("nan")
    sigma: float = float("nan")
    status: str = ""
    termination: str = ""
    schema_version: int = SUMMARY_SCHEMA

    @classmethod
    def from_report(cls, report, trajectory=None):
        s = cls(
            residual_minv_before=report.residual_minv_before,
            residual_l2_before=report.residual_l2_before,
            residual_minv_after=report.residual_minv,
            residual_l2_after=report.residual_l2,
            iterations=report.iterations,
            wall_time=report.wall_time,
            matrix_min=report.matrix_min,
            matrix_max=report.matrix_max,
            sigma=report.sigma,
            status=report.status,
            termination=report.termination,
        )
        if trajectory is not None:
            s.max_drift = float(trajectory.metrics.max_drift.max())
            s.tip_displacement = float(trajectory.metrics.tip_drift[-1])
        return s

    def to_json(self):
        # non-finite numbers become null to keep the document strict JSON
        d = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in asdict(self).items()}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("schema_version") != SUMMARY_SCHEMA:
            raise ParseError(f"unsupported summary schema {d.get('schema_version')!r}")
        names = {f.name for f in fields(cls)}
        return cls(**{k: (float("nan") if v is None else v) for k, v in d.items() if k in names})

    def save(self, path):
        _write_text(path, self.to_json())
