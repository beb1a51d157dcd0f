"""Experiment configuration: TOML ingestion and schema validation.

Validation collects every problem before reporting; nothing is computed or
written for an invalid config.
"""

from dataclasses import dataclass, field
import datetime
import math
import sys

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

U64 = 2**64

GEOMETRIES = ("euclidean", "torus", "so3", "sun", "sphere")
SAMPLERS = {
    "mala": ("euclidean",),
    "underdamped": ("euclidean",),
    "ilmcmc_lie": ("so3", "sun"),
    "ilmcmc_sphere": ("sphere",),
    "diffusion": ("euclidean", "torus"),
}
INTEGRATORS = {
    "mala": (),
    "underdamped": ("ou_exact",),
    "ilmcmc_lie": ("lie_leapfrog",),
    "ilmcmc_sphere": ("geodesic",),
    "diffusion": ("em", "heun"),
}
TARGET_NAMES = {
    "euclidean": ("gaussian", "double_well"),
    "torus": ("torus_cosine", "uniform"),
    "so3": ("zero", "trace", "linear"),
    "sun": ("zero", "trace", "linear"),
    "sphere": ("zero", "vmf", "linear"),
}

TARGET_PARAMS = {
    "gaussian": ("variances", "mean", "reference_scale"),
    "double_well": ("reference_scale",),
    "torus_cosine": ("amplitude",),
    "uniform": (),
    "zero": (),
    "trace": ("scale",),
    "vmf": ("kappa",),
}
_LINEAR_PARAM = {"so3": "lambda", "sun": "lambda", "sphere": "c"}


class _Checker:
    def __init__(self):
        self.errors = []

    def error(self, path, msg):
        self.errors.append((path, msg))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool))


def _positive(v):
    return _is_num(v) and math.isfinite(v) and v > 0


# A field is (kind, default, rule) where rule(value) -> error message or None.
REQUIRED = object()


def _int_rule(lo=None, hi=None):
    def rule(v):
        if not _is_int(v):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be >= {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None

    return rule


def _pos_rule(v):
    return None if _positive(v) else "must be a positive finite number"


def _num_rule(v):
    return None if _is_num(v) and math.isfinite(v) else "must be a finite number"


def _bool_rule(v):
    return None if isinstance(v, bool) else "must be a boolean"


def _choice_rule(options):
    def rule(v):
        return None if v in options else f"must be one of {', '.join(map(repr, options))}"

    return rule


def _str_rule(v):
    return None if isinstance(v, str) else "must be a string"


def _num_array_rule(v):
    if isinstance(v, list) and all(_is_num(x) and math.isfinite(x) for x in v) and v:
        return None
    return "must be a non-empty array of finite numbers"


def _matrix_or_num_rule(v):
    if _is_num(v):
        return None if math.isfinite(v) else "must be finite"
    if isinstance(v, list) and v and all(isinstance(r, list) and len(r) == len(v) for r in v) and all(
        _is_num(x) and math.isfinite(x) for r in v for x in r
    ):
        return None
    return "must be a number or a square array of arrays"


def _bounds_rule(v):
    if isinstance(v, list) and v and all(
        isinstance(b, list) and len(b) == 2 and all(_is_num(x) for x in b) and b[0] < b[1] for b in v
    ):
        return None
    return "must be an array of [low, high] pairs with low < high"


SCHEMA = {
    "geometry": {
        "kind": (REQUIRED, _choice_rule(GEOMETRIES)),
        "dim": (None, _int_rule(1)),
        "period": (None, lambda v: None if _positive(v) or (_num_array_rule(v) is None and all(x > 0 for x in v))
                   else "must be a positive number or array of positive numbers"),
        "n": (None, _int_rule(2)),
        "ambient_dim": (None, _int_rule(2)),
    },
    "target": {
        "name": (REQUIRED, _str_rule),
        "beta": (1.0, _pos_rule),
        "variances": (None, _num_array_rule),
        "mean": (None, _num_array_rule),
        "amplitude": (None, _num_rule),
        "reference_scale": (None, _pos_rule),
        "scale": (None, _num_rule),
        "lambda": (None, _matrix_or_num_rule),
        "kappa": (None, _num_rule),
        "c": (None, _num_array_rule),
    },
    "recipe": {
        "bracket": ("zero", _choice_rule(("zero", "constant_bracket", "stream_function"))),
        "bracket_strength": (1.0, _num_rule),
        "noise": ("isotropic", _choice_rule(("isotropic", "multiplicative", "coupled", "volume_free", "none"))),
        "noise_scale": (1.0, _pos_rule),
        "obstruction": (None, _num_array_rule),
        "convention": ("stratonovich", _choice_rule(("ito", "stratonovich"))),
    },
    "sampler": {
        "kind": (REQUIRED, _choice_rule(tuple(SAMPLERS))),
        "n_iterations": (REQUIRED, _int_rule(0)),
        "burn_in": (0, _int_rule(0)),
        "dt": (REQUIRED, _pos_rule),
        "n_leapfrog": (10, _int_rule(1)),
        "h": (1.0, _pos_rule),
        "thinning": (1, _int_rule(1)),
        "chains": (1, _int_rule(1, 64)),
        "initial": (None, _num_array_rule),
        "mass": (1.0, _matrix_or_num_rule),
        "friction": (1.0, _matrix_or_num_rule),
        "preconditioner": (None, _matrix_or_num_rule),
        "integrator": (None, _str_rule),
    },
    "verify": {
        "fokker_planck": (True, _bool_rule),
        "mutants": (True, _bool_rule),
        "current": (False, _bool_rule),
        "generator": (False, _bool_rule),
        "n_mc": (100000, _int_rule(100)),
        "m": (None, _int_rule(8)),
        "stride": (None, _int_rule(1)),
        "bounds": (None, _bounds_rule),
        "tolerance": (1e-3, _pos_rule),
    },
    "diagnostics": {
        "kl": (True, _bool_rule),
        "kl_bins": (40, _int_rule(2, 10000)),
        "kl_windows": (10, _int_rule(1, 10000)),
    },
}
TOP_LEVEL = {"seed", "output"} | set(SCHEMA)


@dataclass
class ExperimentConfig:
    """Validated configuration with defaults filled in.

    ``sampler`` and ``verify`` are ``None`` when their tables are absent.
    """

    geometry: dict
    target: dict
    recipe: dict
    sampler: dict = None
    verify: dict = None
    diagnostics: dict = field(default_factory=dict)
    seed: int = None
    output: str = None

    def to_dict(self):
        return {k: getattr(self, k) for k in ("seed", "output", "geometry", "target", "recipe", "sampler",
                                              "verify", "diagnostics")}


def _check_values(node, path, chk):
    """Reject datetimes and mixed-type arrays anywhere in the document."""
    if isinstance(node, dict):
        for k, v in node.items():
            _check_values(v, f"{path}.{k}" if path else k, chk)
    elif isinstance(node, list):
        kinds = {("number" if _is_num(x) else type(x).__name__) for x in node}
        if len(kinds) > 1:
            chk.error(path, "arrays must be homogeneous")
        for i, x in enumerate(node):
            _check_values(x, f"{path}[{i}]", chk)
    elif isinstance(node, (datetime.date, datetime.time, datetime.datetime)):
        chk.error(path, "datetimes are not supported")


def _table(raw, name, chk):
    spec = SCHEMA[name]
    out = {}
    for key in raw:
        if key not in spec:
            chk.error(f"{name}.{key}", "unknown key")
    for key, (default, rule) in spec.items():
        if key in raw:
            msg = rule(raw[key])
            if msg:
                chk.error(f"{name}.{key}", msg)
            out[key] = raw[key]
        elif default is REQUIRED:
            chk.error(f"{name}.{key}", "missing required key")
        else:
            out[key] = default
    return out


def _cross_checks(cfg, chk):
    geo = cfg["geometry"]
    kind = geo.get("kind")
    if kind not in GEOMETRIES:
        return
    if kind in ("euclidean", "torus") and geo.get("dim") is None:
        chk.error("geometry.dim", f"missing required key for geometry {kind!r}")
    if kind == "sun" and geo.get("n") is None:
        chk.error("geometry.n", "missing required key for geometry 'sun'")
    for key, kinds in (("period", ("torus",)), ("n", ("sun",)), ("ambient_dim", ("sphere",)),
                       ("dim", ("euclidean", "torus"))):
        if geo.get(key) is not None and kind not in kinds:
            chk.error(f"geometry.{key}", f"not allowed for geometry {kind!r}")
    tname = cfg["target"].get("name")
    if isinstance(tname, str) and tname not in TARGET_NAMES[kind]:
        chk.error("target.name", f"must be one of {', '.join(map(repr, TARGET_NAMES[kind]))} for geometry {kind!r}")
    if isinstance(tname, str) and tname in TARGET_NAMES[kind]:
        allowed = (_LINEAR_PARAM[kind],) if tname == "linear" else TARGET_PARAMS[tname]
        for key in ("variances", "mean", "amplitude", "reference_scale", "scale", "lambda", "kappa", "c"):
            if cfg["target"].get(key) is not None and key not in allowed:
                chk.error(f"target.{key}", f"not used by target {tname!r}")
        if tname == "linear" and cfg["target"].get(_LINEAR_PARAM[kind]) is None:
            chk.error(f"target.{_LINEAR_PARAM[kind]}", "missing required key for target 'linear'")
    if kind not in ("euclidean", "torus") and cfg["raw_recipe"]:
        chk.error("recipe", f"recipe block is only meaningful on euclidean or torus geometries, not {kind!r}")
    if cfg["recipe"].get("obstruction") is not None and kind != "torus":
        chk.error("recipe.obstruction", "an obstruction drift needs geometry 'torus'")
    dim = geo.get("dim")
    if _is_int(dim) and cfg["recipe"].get("noise") == "volume_free" and dim < 2:
        chk.error("recipe.noise", "volume_free noise needs dim >= 2")
    if _is_int(dim) and cfg["recipe"].get("bracket") != "zero" and dim < 2:
        chk.error("recipe.bracket", "a non-zero bracket needs dim >= 2")
    smp = cfg["sampler"]
    if smp is not None and smp.get("kind") in SAMPLERS:
        if kind not in SAMPLERS[smp["kind"]]:
            chk.error("sampler.kind", f"sampler {smp['kind']!r} does not run on geometry {kind!r}")
        integ = smp.get("integrator")
        if integ is not None:
            allowed = INTEGRATORS[smp["kind"]]
            if integ not in allowed:
                chk.error("sampler.integrator", f"must be one of {', '.join(map(repr, allowed)) or 'nothing'} for sampler {smp['kind']!r}")
        n, b = smp.get("n_iterations"), smp.get("burn_in")
        if _is_int(n) and _is_int(b) and ((n > 0 and b >= n) or (n == 0 and b != 0)):
            chk.error("sampler.burn_in", "must be smaller than sampler.n_iterations")
    if cfg["verify"] is not None:
        if kind not in ("euclidean", "torus"):
            chk.error("verify", f"verification needs a euclidean or torus geometry, not {kind!r}")
        elif _is_int(dim) and dim > 3:
            chk.error("verify", "verification grids support dim <= 3")
        bounds = cfg["verify"].get("bounds")
        if bounds is not None and _is_int(dim) and isinstance(bounds, list) and len(bounds) != dim:
            chk.error("verify.bounds", f"needs {dim} [low, high] pairs")


def parse_config(text):
    """Parse and validate config text; raises :class:`ConfigError` listing every problem."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([("", f"parse error: {exc}")]) from None
    chk = _Checker()
    _check_values(raw, "", chk)
    for key in raw:
        if key not in TOP_LEVEL:
            chk.error(key, "unknown key")
    for key in SCHEMA:
        if key in raw and not isinstance(raw[key], dict):
            chk.error(key, "must be a table")
            raw[key] = {}
    seed = raw.get("seed")
    if seed is not None and not (_is_int(seed) and 0 <= seed < U64):
        chk.error("seed", "must be an unsigned 64-bit integer")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        chk.error("output", "must be a string")
    for key in ("geometry", "target"):
        if key not in raw:
            chk.error(key, "missing required table")
    cfg = {name: _table(raw.get(name, {}), name, chk) for name in ("geometry", "target", "recipe", "diagnostics")}
    cfg["raw_recipe"] = raw.get("recipe", {})
    cfg["sampler"] = _table(raw["sampler"], "sampler", chk) if "sampler" in raw else None
    cfg["verify"] = _table(raw["verify"], "verify", chk) if "verify" in raw else None
    if "geometry" in raw:
        _cross_checks(cfg, chk)
    if "sampler" not in raw and "verify" not in raw:
        chk.error("", "config needs a sampler or a verify table")
    if chk.errors:
        raise ConfigError(chk.errors)
    return ExperimentConfig(cfg["geometry"], cfg["target"], cfg["recipe"], cfg["sampler"], cfg["verify"],
                            cfg["diagnostics"], seed, output)
