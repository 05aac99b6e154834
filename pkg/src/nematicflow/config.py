"""Run configuration: JSON schema, defaults and physics checks."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import jsonschema

from .evolution import StepConfig
from .grid import Grid, GridError
from .lame import LameParams
from .pressure import law_from_dict
from .scenarios import SCENARIOS

FAMILIES = {
    "CauchyPeriodicProxy": "periodic",
    "DirichletNeumann": "dirichlet",
    "NavierSlipNeumann": "navier_slip",
}
SIMPLY_CONNECTED_NOTE = ("slip walls on a rectangular box: the box is simply connected, "
                         "but its corners are not smooth")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["grid", "initial"],
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object",
            "required": ["shape"],
            "additionalProperties": False,
            "properties": {
                "shape": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                "lengths": {"oneOf": [_POS, {"type": "array", "items": _POS}]},
                "origin": {"type": "array", "items": _NUM},
                "boundary": {"oneOf": [
                    {"type": "string"},
                    {"type": "array", "items": {"oneOf": [
                        {"type": "string"},
                        {"type": "array", "items": {"type": "string"},
                         "minItems": 2, "maxItems": 2}]}}]},
            },
        },
        "boundary_family": {"enum": sorted(FAMILIES)},
        "viscosity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mu": _NUM, "lam": _NUM},
        },
        "pressure": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["isentropic", "tabulated"]},
                "a": _NUM, "gamma": _NUM,
                "breakpoints": {"type": "array", "items": _NUM},
                "values": {"type": "array", "items": _NUM},
            },
            "additionalProperties": False,
        },
        "step": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["grid", "galerkin"]},
                "m": {"type": "integer", "minimum": 1},
                "cfl": _POS,
                "dt_max": _POS,
                "dt": _POS,
                "diffusion_number": _POS,
                "renormalize_director": {"type": "boolean"},
                "freeze_flow": {"type": "boolean"},
                "director_force_form": {"enum": ["divergence", "direct"]},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scenario": {"enum": sorted(SCENARIOS)},
                "params": {"type": "object"},
                "snapshot": {"type": "string"},
            },
            "oneOf": [{"required": ["scenario"]}, {"required": ["snapshot"]}],
        },
        "delta": {"type": "number", "minimum": 0},
        "t_end": _NUM,
        "max_steps": {"type": "integer", "minimum": 1},
        "stride": {"type": "integer", "minimum": 1},
        "snapshot_stride": {"type": "integer", "minimum": 1},
        "checkpoint_stride": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "basis_cache": {"type": "string"},
        "seed": {"type": "integer"},
        "phi_q": {"type": "number", "minimum": 1},
        "decomposition": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    """Schema or physics violation; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass
class RunConfig:
    grid: Grid
    family: str
    params: LameParams
    law: object
    step: StepConfig
    dt: float | None
    initial: dict
    delta: float
    t_end: float
    max_steps: int | None
    stride: int
    snapshot_stride: int | None
    checkpoint_stride: int | None
    output_dir: str
    basis_cache: str | None
    seed: int
    phi_q: float
    decomposition: bool
    raw: dict
    metadata: dict = field(default_factory=dict)

    @property
    def bc(self) -> str:
        return FAMILIES[self.family]

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def config_hash(raw: dict) -> str:
    """Hash of the normalised config; the output directory does not take part."""
    ident = {k: v for k, v in raw.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()[:16]


def _default_family(grid: Grid) -> str:
    return "CauchyPeriodicProxy" if grid.all_periodic else "DirichletNeumann"


def parse_config(text: str | dict) -> RunConfig:
    """Validate a JSON document (or an already-decoded dict) and fill defaults."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"not valid JSON: {exc}") from exc
    else:
        doc = copy.deepcopy(text)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e.absolute_path), e.message)
    return _normalise(doc)


def _normalise(doc: dict) -> RunConfig:
    raw = copy.deepcopy(doc)
    gd = raw["grid"]
    gd.setdefault("lengths", 1.0)
    gd.setdefault("boundary", "periodic")
    try:
        grid = Grid.box(gd["shape"], gd["lengths"], gd["boundary"], gd.get("origin"))
    except GridError as exc:
        msg = str(exc)
        path = "grid.shape"
        if msg.startswith("axis "):
            axis = msg.split(":")[0].split()[1]
            path = f"grid.boundary[{axis}]" if "boundar" in msg else f"grid.shape[{axis}]"
        raise ConfigError(path, msg) from exc
    gd["shape"] = list(grid.shape)
    gd["lengths"] = list(grid.lengths)
    gd["origin"] = list(grid.origin)
    gd["boundary"] = list(grid.boundary)

    family = raw.setdefault("boundary_family", _default_family(grid))
    if family == "CauchyPeriodicProxy" and not grid.all_periodic:
        raise ConfigError("boundary_family", "the periodic proxy needs periodic boundaries on "
                          "every axis")
    if family != "CauchyPeriodicProxy" and grid.all_periodic:
        raise ConfigError("boundary_family", f"{family} needs at least one wall axis")

    visc = raw.setdefault("viscosity", {})
    visc.setdefault("mu", 1.0)
    visc.setdefault("lam", 0.0)
    params = LameParams(float(visc["mu"]), float(visc["lam"]))
    if not params.admissible:
        raise ConfigError("viscosity", "viscosity condition violated: need mu > 0 and "
                          f"2 mu + 3 lam >= 0 (got mu={params.mu}, lam={params.lam})")

    pd = raw.setdefault("pressure", {})
    pd.setdefault("kind", "isentropic")
    if pd["kind"] == "isentropic":
        pd.setdefault("a", 1.0)
        pd.setdefault("gamma", 1.4)
    try:
        law = law_from_dict(pd)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("pressure", str(exc)) from exc

    sd = raw.setdefault("step", {})
    sd.setdefault("mode", "grid")
    sd.setdefault("m", 32)
    sd.setdefault("cfl", 0.5)
    sd.setdefault("dt_max", 1e-2)
    sd.setdefault("diffusion_number", 0.5)
    sd.setdefault("renormalize_director", True)
    sd.setdefault("director_force_form", "divergence")

    ini = raw["initial"]
    scen_over = {}
    if "scenario" in ini:
        ini.setdefault("params", {})
        if ini["scenario"] == "director-heat-1d":
            scen_over["freeze_flow"] = True
    sd.setdefault("freeze_flow", scen_over.get("freeze_flow", False))
    dt = sd.get("dt")
    try:
        step = StepConfig(mode=sd["mode"], m=sd["m"], cfl=sd["cfl"], dt_max=sd["dt_max"],
                          diffusion_number=sd["diffusion_number"],
                          renormalize_director=sd["renormalize_director"],
                          freeze_flow=sd["freeze_flow"],
                          director_force_form=sd["director_force_form"],
                          bc=FAMILIES[family])
    except ValueError as exc:
        raise ConfigError("step", str(exc)) from exc

    delta = raw.setdefault("delta", 1e-3 if step.mode == "galerkin" else 0.0)
    t_end = raw.setdefault("t_end", 1.0)
    if not t_end > 0:
        raise ConfigError("t_end", f"must be positive, got {t_end}")
    raw.setdefault("stride", 1)
    raw.setdefault("seed", 0)
    raw.setdefault("phi_q", 6.0)
    raw.setdefault("decomposition", False)
    raw.setdefault("output_dir", "run_output")

    meta = {"boundary_label": {"CauchyPeriodicProxy": "periodic proxy",
                               "DirichletNeumann": "dirichlet",
                               "NavierSlipNeumann": "navier slip"}[family],
            "blowup_margin_ok": params.blowup_margin_ok,
            "warnings": []}
    if not params.blowup_margin_ok:
        meta["warnings"].append("7 mu > 9 lam fails: blow-up monitors are reported but the "
                                "criterion they belong to does not apply")
    if family == "NavierSlipNeumann":
        meta["domain_note"] = SIMPLY_CONNECTED_NOTE
    if step.mode == "galerkin" and delta == 0:
        meta["warnings"].append("Galerkin run without density regularisation")

    return RunConfig(grid=grid, family=family, params=params, law=law, step=step, dt=dt,
                     initial=ini, delta=float(delta), t_end=float(t_end),
                     max_steps=raw.get("max_steps"), stride=raw["stride"],
                     snapshot_stride=raw.get("snapshot_stride"),
                     checkpoint_stride=raw.get("checkpoint_stride"),
                     output_dir=raw["output_dir"], basis_cache=raw.get("basis_cache"),
                     seed=raw["seed"], phi_q=float(raw["phi_q"]),
                     decomposition=bool(raw["decomposition"]), raw=raw, metadata=meta)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
