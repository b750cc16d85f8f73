"""Run configuration: a plain ``key = value`` file plus command-line overrides.

Lines starting with ``#`` are comments.  List values are comma separated.
Example::

    problem = hertz
    method = alm-enriched
    n_increments = 20
    designs = a, b
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace

from .problems import METHODS, PLATE_LEVELS, REFINE_LEVELS

PROBLEMS = ("patch", "converge", "condition", "hertz", "generic")
CONVERGE_METHODS = ("mpc-enriched", "lm-enriched", "mpc-two-pass-std")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: str = "patch"
    methods: tuple = ()
    scaling: str = "none"
    preconditioner: str = "off"
    penalty: float | None = None
    penalty_scale: float = 1.0
    tol: float = 1e-5
    n_increments: int | None = None   # 20 for Hertz, 1 otherwise
    max_iter: int = 50
    meshes: tuple = ()
    out: str = "out"
    levels: tuple = ()
    variants: tuple = ("horizontal", "vertical")
    designs: tuple = ("a", "b")
    # generic problems
    E: tuple = ()
    nu: tuple = ()
    fix_x: tuple = ()
    fix_y: tuple = ()
    tractions: tuple = ()
    contact: tuple = ()
    interface: tuple = ()

    @property
    def method(self) -> str:
        return self.methods[0]

    def canonical(self) -> str:
        d = asdict(self)
        d.pop("out")
        return "\n".join(f"{k}={d[k]!r}" for k in sorted(d))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def provenance(self) -> str:
        return f"enrichcontact problem={self.problem} methods={','.join(self.methods)} config={self.hash()}"


_TUPLES = {"methods", "meshes", "levels", "variants", "designs", "E", "nu",
           "fix_x", "fix_y", "tractions", "contact", "interface"}
_ALIASES = {"method": "methods", "mesh": "meshes", "precond": "preconditioner"}


def _convert(key, raw):
    if key in _TUPLES:
        items = [s.strip() for s in raw.split(",")] if isinstance(raw, str) else list(raw)
        items = [s for s in items if s != ""]
        if key == "levels":
            return tuple(int(v) for v in items)
        if key in ("E", "nu"):
            return tuple(float(v) for v in items)
        if key == "tractions":
            # tag:t1:t2 entries, separated by ';' in files
            items = [s.strip() for s in ";".join(items).split(";") if s.strip()]
        return tuple(items)
    if key in ("tol", "penalty_scale"):
        return float(raw)
    if key == "penalty":
        return None if str(raw).lower() in ("none", "") else float(raw)
    if key in ("n_increments", "max_iter"):
        return int(raw)
    return str(raw).strip()


def parse_lines(lines) -> dict:
    out = {}
    for no, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            with open(path) as f:
                raw = parse_lines(f)
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return make_config(raw)


def make_config(raw: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for key, value in raw.items():
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _convert(key, value)
        except ValueError as err:
            raise ConfigError(f"bad value for {key}: {value!r}") from err
    cfg = RunConfig(**values)
    return validate(_with_defaults(cfg))


def _with_defaults(cfg: RunConfig) -> RunConfig:
    changes = {}
    if not cfg.methods:
        changes["methods"] = {
            "patch": ("mpc-enriched",),
            "converge": CONVERGE_METHODS,
            "condition": ("mpc-enriched", "alm-enriched"),
            "hertz": ("alm-enriched",),
            "generic": ("alm-enriched",) if cfg.contact else ("mpc-enriched",),
        }.get(cfg.problem, ("mpc-enriched",))
    if not cfg.levels and cfg.problem in ("converge", "condition"):
        changes["levels"] = PLATE_LEVELS if cfg.problem == "converge" else REFINE_LEVELS
    if cfg.n_increments is None:
        changes["n_increments"] = 20 if cfg.problem == "hertz" else 1
    return replace(cfg, **changes) if changes else cfg


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg.problem!r}; choose from {', '.join(PROBLEMS)}")
    for m in cfg.methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if cfg.scaling not in ("none", "optimal"):
        raise ConfigError(f"unknown scaling {cfg.scaling!r}")
    if cfg.preconditioner not in ("off", "jacobi"):
        raise ConfigError(f"unknown preconditioner {cfg.preconditioner!r}")
    if not cfg.tol > 0:
        raise ConfigError("tol must be positive")
    if cfg.n_increments < 1 or cfg.max_iter < 1:
        raise ConfigError("n_increments and max_iter must be at least 1")
    if cfg.penalty is not None and not cfg.penalty > 0:
        raise ConfigError("penalty must be positive")
    if not cfg.penalty_scale > 0:
        raise ConfigError("penalty_scale must be positive")
    if cfg.problem == "hertz" and set(cfg.methods) != {"alm-enriched"}:
        raise ConfigError("the Hertz problem is solved with alm-enriched only")
    if cfg.problem == "converge" and "alm-enriched" in cfg.methods:
        raise ConfigError("the plate is a tying problem; alm-enriched does not apply")
    if cfg.problem == "condition" and not set(cfg.methods) <= {"mpc-enriched", "alm-enriched"}:
        raise ConfigError("conditioning is studied for mpc-enriched and alm-enriched")
    if cfg.problem == "converge":
        for v in cfg.variants:
            if v not in ("horizontal", "vertical"):
                raise ConfigError(f"unknown variant {v!r}")
        if cfg.meshes:
            raise ConfigError("the plate family is generated; --mesh does not apply")
        if len(cfg.levels) < 3:
            raise ConfigError("a rate fit needs at least 3 refinement levels")
    if cfg.problem == "hertz":
        for d in cfg.designs:
            if d not in ("a", "b"):
                raise ConfigError(f"unknown Hertz design {d!r}")
        if len(cfg.meshes) > 1:
            raise ConfigError("the Hertz problem takes at most one punch mesh")
    if cfg.problem == "generic":
        _validate_generic(cfg)
    elif cfg.problem in ("patch", "condition") and cfg.meshes:
        raise ConfigError(f"the {cfg.problem} problem builds its own meshes")
    if cfg.problem == "patch" and len(cfg.methods) != 1:
        raise ConfigError("the patch problem runs one method at a time")
    return cfg


def _validate_generic(cfg: RunConfig):
    if not cfg.meshes:
        raise ConfigError("generic problems need at least one --mesh")
    if len(cfg.methods) != 1:
        raise ConfigError("generic problems run one method")
    if len(cfg.E) != len(cfg.meshes) or len(cfg.nu) != len(cfg.meshes):
        raise ConfigError("give one E and one nu per mesh")
    if cfg.contact and cfg.interface:
        raise ConfigError("give either contact or interface, not both")
    for pair in (cfg.contact, cfg.interface):
        if pair and len(pair) != 2:
            raise ConfigError("contact/interface takes two surface tags")
    if cfg.contact and cfg.method != "alm-enriched":
        raise ConfigError("contact problems are solved with alm-enriched")
    if cfg.interface and cfg.method not in ("mpc-enriched", "lm-enriched", "mpc-single", "mpc-two-pass-std"):
        raise ConfigError(f"method {cfg.method} cannot tie an interface")
    for t in cfg.tractions:
        parts = t.split(":")
        if len(parts) != 3:
            raise ConfigError(f"traction {t!r} must read tag:t1:t2")
        try:
            float(parts[1]), float(parts[2])
        except ValueError as err:
            raise ConfigError(f"traction {t!r} has non-numeric components") from err

