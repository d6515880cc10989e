"""Run configuration: a flat ``key = value`` file with dotted sections.

Grammar, one entry per line (``#`` comments and blank lines are ignored)::

    material.rho = 1000            # material.{rho,radius,c_stretch,c_bend,c_twist}
    gravity = 0 -9.81 0            # vectors are whitespace separated
    scenario.name = vertical       # or scenario.file = path/to/strands.txt
    scenario.n = 20                # any other scenario.* key goes to the generator
    optimizer.alpha = 1e-5         # any OptimizerSettings field
    sim.dt = 0.016666666666666666  # sim.{dt,substeps,step_count}
    root.key.0 = 0 0 0 0 0 0 0     # t tx ty tz rx ry rz (axis-angle, rad)
    load.19 = 0 -0.1 0             # point force on a vertex; negative indices count from the tip
    load.tail_scale = 10           # extra force on the tip: scale x its own weight
    output.dir = out

Booleans are ``true``/``false``.  Unknown keys are a parse error so typos
do not silently fall back to defaults.
"""
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .elastic import ExternalLoad
from .errors import ParseError, ValidationError
from .fileio import IoError
from .kinematics import MaterialParams
from .restshape import OptimizerSettings
from .scenarios import GENERATORS
from .sim import RootMotion, SimConfig

_MATERIAL_KEYS = {f.name for f in fields(MaterialParams)}
_OPT_FIELDS = {f.name: f for f in fields(OptimizerSettings)}
_SIM_KEYS = {"dt": float, "substeps": int, "step_count": int}


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt_value(float(x) if not isinstance(x, str) else x) for x in v)
    return str(v)


def _coerce(raw, typ, no, key):
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ == "vec3":
            vals = [float(x) for x in raw.split()]
            if len(vals) != 3:
                raise ValueError
            return tuple(vals)
        return raw
    except ValueError:
        raise ParseError(f"bad value {raw!r} for {key}", no) from None


def _scalar_or_str(raw):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


@dataclass
class RunConfig:
    material: MaterialParams = field(default_factory=MaterialParams)
    gravity: tuple = (0.0, -9.81, 0.0)
    scenario_name: str = "vertical"
    scenario_file: str = None
    scenario_params: dict = field(default_factory=dict)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    dt: float = 1.0 / 60.0
    substeps: int = 1
    step_count: int = 300
    root_keys: dict = field(default_factory=dict)  # index -> (t, tx, ty, tz, rx, ry, rz)
    loads: dict = field(default_factory=dict)  # vertex index -> force
    tail_scale: float = 0.0
    output_dir: str = "out"

    # --- parsing ------------------------------------------------------------

    @classmethod
    def parse(cls, text, base_dir=None):
        cfg = cls()
        material, optimizer = {}, {}
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {line!r}", no)
            key, value = (s.strip() for s in line.split("=", 1))
            cfg._set(key, value, no, material, optimizer)
        try:
            cfg.material = MaterialParams(**material)
            cfg.optimizer = OptimizerSettings(**optimizer)
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc)) from exc
        if cfg.scenario_file and base_dir and not os.path.isabs(cfg.scenario_file):
            cfg.scenario_file = os.path.join(base_dir, cfg.scenario_file)
        cfg.validate()
        return cfg

    def _set(self, key, value, no, material, optimizer):
        section, _, name = key.partition(".")
        if key == "gravity":
            self.gravity = _coerce(value, "vec3", no, key)
        elif key == "output.dir":
            self.output_dir = value
        elif key == "scenario.name":
            self.scenario_name = value
        elif key == "scenario.file":
            self.scenario_file = value
        elif section == "scenario" and name:
            self.scenario_params[name] = _scalar_or_str(value)
        elif section == "material" and name in _MATERIAL_KEYS:
            material[name] = _coerce(value, float, no, key)
        elif section == "optimizer" and name in _OPT_FIELDS:
            typ = _OPT_FIELDS[name].type
            typ = {"float": float, "int": int, "bool": bool, "str": str}.get(typ, typ)
            optimizer[name] = _coerce(value, typ, no, key)
        elif section == "sim" and name in _SIM_KEYS:
            setattr(self, name, _coerce(value, _SIM_KEYS[name], no, key))
        elif key == "load.tail_scale":
            self.tail_scale = _coerce(value, float, no, key)
        elif section == "load" and name.lstrip("-").isdigit():
            self.loads[int(name)] = _coerce(value, "vec3", no, key)
        elif key.startswith("root.key.") and key[9:].isdigit():
            vals = [_coerce(x, float, no, key) for x in value.split()]
            if len(vals) != 7:
                raise ParseError(f"{key} needs 7 numbers: t tx ty tz rx ry rz", no)
            self.root_keys[int(key[9:])] = tuple(vals)
        else:
            raise ParseError(f"unknown key {key!r}", no)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        return cls.parse(text, base_dir=os.path.dirname(os.path.abspath(path)))

    def validate(self):
        if self.scenario_file is None and self.scenario_name not in GENERATORS:
            raise ValidationError(f"unknown scenario {self.scenario_name!r}")
        if self.scenario_file is not None and not os.path.exists(self.scenario_file):
            raise ValidationError(f"scenario file {self.scenario_file!r} does not exist")
        if not self.dt > 0 or self.substeps < 1 or self.step_count < 0:
            raise ValidationError("need dt > 0, substeps >= 1 and step_count >= 0")
        return self

    # --- serialization -------------------------------------------------------

    def items(self):
        """Ordered ``(key, value)`` pairs; inverse of ``parse``."""
        out = [(f"material.{f.name}", getattr(self.material, f.name)) for f in fields(MaterialParams)]
        out.append(("gravity", tuple(self.gravity)))
        if self.scenario_file is not None:
            out.append(("scenario.file", self.scenario_file))
        else:
            out.append(("scenario.name", self.scenario_name))
        out += [(f"scenario.{k}", v) for k, v in sorted(self.scenario_params.items())]
        out += [(f"optimizer.{f.name}", getattr(self.optimizer, f.name)) for f in fields(OptimizerSettings)]
        out += [("sim.dt", self.dt), ("sim.substeps", self.substeps), ("sim.step_count", self.step_count)]
        out += [(f"root.key.{k}", v) for k, v in sorted(self.root_keys.items())]
        out += [(f"load.{k}", tuple(v)) for k, v in sorted(self.loads.items())]
        if self.tail_scale:
            out.append(("load.tail_scale", self.tail_scale))
        out.append(("output.dir", self.output_dir))
        return out

    def serialize(self):
        return "\n".join(f"{k} = {_fmt_value(v)}" for k, v in self.items()) + "\n"

    def with_overrides(self, pairs):
        """Apply ``key=value`` strings (CLI ``--set``) on top of this config."""
        text = self.serialize() + "\n".join(pairs) + "\n"
        return RunConfig.parse(text)

    # --- builders -------------------------------------------------------------

    def sim_config(self, gravity=None):
        motion = None
        if self.root_keys:
            keys = np.array([self.root_keys[k] for k in sorted(self.root_keys)])
            motion = RootMotion(keys[:, 0], keys[:, 1:4], keys[:, 4:7])
        g = self.gravity if gravity is None else gravity
        return SimConfig(self.dt, self.substeps, tuple(g), self.step_count, motion)

    def external_load(self, n_vertices, mass=None):
        forces = {}
        for i, f in self.loads.items():
            idx = i % n_vertices
            forces[idx] = forces.get(idx, np.zeros(3)) + np.asarray(f, float)
        if self.tail_scale:
            if mass is None:
                raise ValidationError("tail load needs the mass matrix")
            tip = n_vertices - 1
            weight = self.tail_scale * mass.vertex_masses[tip] * np.asarray(self.gravity, float)
            forces[tip] = forces.get(tip, np.zeros(3)) + weight
        return ExternalLoad(tuple(self.gravity), forces)

    def with_optimizer(self, **kw):
        return replace(self, optimizer=replace(self.optimizer, **kw))
