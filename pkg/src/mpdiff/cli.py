"""Command-line entry point: ``mpdiff run | verify | list-builtins``.

Output files in the experiment directory:

* ``chain.csv`` (plus ``chain_<k>.csv`` for extra chains): ``iter``, state
  columns, ``accepted``, ``delta_H``; reals written with ``%.17g``.
* ``report.json``: ``meta``, ``moments``, ``ess``, ``kl_trace``, ``residuals``.
* ``verify.json``: full verification reports, when a verify table is present.
* ``kl_trace.csv``: plot-ready ``chain, iteration, kl`` rows, when a KL trace
  was computed.

Exit status: 0 success, 1 a verification check failed, 2 bad config or
usage, 3 runtime or I/O failure (partial outputs are removed).
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import math
import os
import sys

import numpy as np

from . import builtins as bi
from .config import parse_config
from .diagnostics import KL_ALPHA, MomentReport, effective_sample_size, ergodic_average, histogram_kl
from .errors import ConfigError, InsufficientDataError, MpdiffError
from .geometry import EmbeddedSphere, EuclideanSpace, FlatTorus, MatrixLieGroup
from .integrators import LiePotential, SpherePotential, euler_maruyama_step, stratonovich_heun_step
from .oracles import axis_moment, so3_trace_mean, sphere_last_coordinate_moment
from .recipe import Convention, NoiseModel, assemble_a_diffusion, assemble_obstruction, to_ito, to_stratonovich
from .samplers import LieSampler, MalaSampler, SamplerConfig, SphereSampler, UnderdampedSampler, run_chain
from .verify import (
    GridSpec,
    current_residual,
    fokker_planck_analysis,
    fokker_planck_residual,
    generator_symmetry_defect,
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
VERIFY_FILE = "verify.json"


# serialisation


def format_real(x):
    """``%.17g`` with a decimal point kept so integers stay distinguishable from reals."""
    s = "%.17g" % x
    if all(c not in s for c in ".eni"):
        s += ".0"
    return s


def _json(obj, indent=0):
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_real(float(obj)) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_report_json(reports, path):
    """Write a report mapping as JSON; reals keep 17 significant digits, non-finite become null."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json(reports) + "\n")


def state_columns(chain):
    """Column names for the chain's geometry, from ``chain.meta``."""
    meta = chain.meta
    geo = meta.get("geometry", "euclidean")
    d = chain.samples.shape[1] if chain.samples.ndim == 2 else int(meta.get("state_dim", 0))
    if geo in ("so3", "sun"):
        n = int(round(math.sqrt(d)))
        if np.iscomplexobj(chain.samples):
            pos = [f"g{i}{j}_{part}" for i in range(n) for j in range(n) for part in ("re", "im")]
        else:
            pos = [f"g{i}{j}" for i in range(n) for j in range(n)]
        vel = [f"v{i}" for i in range(meta.get("velocity_dim", 0))]
    elif geo == "sphere":
        pos = [f"q{i}" for i in range(d)]
        vel = [f"v{i}" for i in range(d)]
    else:
        pos = [f"x{i}" for i in range(d)]
        vel = [f"p{i}" for i in range(d)] if chain.velocities is not None else []
    return pos, (vel if chain.velocities is not None else [])


def write_chain_csv(chain, path):
    """``iter, <state>, accepted, delta_H``; one row per stored state."""
    pos, vel = state_columns(chain)
    acc, dh = chain.row_flags()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["iter"] + pos + vel + ["accepted", "delta_H"]) + "\n")
        for k in range(len(chain)):
            x = chain.samples[k]
            if np.iscomplexobj(x):
                x = np.stack([x.real, x.imag], axis=-1).reshape(-1)
            cells = [str(int(chain.iterations[k]))] + ["%.17g" % float(v) for v in x]
            if chain.velocities is not None:
                cells += ["%.17g" % float(v) for v in chain.velocities[k]]
            cells += ["1" if acc[k] else "0", "%.17g" % float(dh[k])]
            fh.write(",".join(cells) + "\n")


def write_trace_csv(rows, path):
    """``chain, iteration, kl`` rows from the report's ``kl_trace`` entries."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("chain,iteration,kl\n")
        for r in rows:
            fh.write(f"{int(r['chain'])},{int(r['iteration'])},{'%.17g' % float(r['kl'])}\n")


# construction


def build_geometry(g):
    kind = g["kind"]
    if kind == "euclidean":
        return EuclideanSpace(g["dim"])
    if kind == "torus":
        return FlatTorus(g["dim"], g["period"] if g["period"] is not None else 2.0 * math.pi)
    if kind == "so3":
        return MatrixLieGroup.so(3)
    if kind == "sun":
        return MatrixLieGroup.su(g["n"])
    return EmbeddedSphere(g["ambient_dim"] or 3)


def _matrix(value, n, path, errors, spd=False):
    a = np.array(value, dtype=float)
    if a.ndim == 0:
        a = float(a) * np.eye(n)
    if a.shape != (n, n):
        errors.append((path, f"must be a {n}x{n} matrix"))
        return None
    if spd:
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            errors.append((path, "must be symmetric positive definite"))
            return None
    return a


def build_target(cfg, geometry):
    t = cfg.target
    name = t["name"]
    errors = []
    if isinstance(geometry, MatrixLieGroup):
        n = geometry.matrix_dim
        if name == "zero":
            pot = LiePotential.zero(n, geometry.dtype)
        elif name == "trace":
            pot = LiePotential.trace(n, t["beta"] * (1.0 if t["scale"] is None else t["scale"]))
        else:
            lam = _matrix(t["lambda"], n, "target.lambda", errors)
            pot = None if lam is None else LiePotential.linear(t["beta"] * lam)
        if errors:
            raise ConfigError(errors)
        return pot
    if isinstance(geometry, EmbeddedSphere):
        k = geometry.ambient_dim
        if name == "zero":
            return SpherePotential.zero(k)
        if name == "vmf":
            c = np.zeros(k)
            c[-1] = t["beta"] * (1.0 if t["kappa"] is None else t["kappa"])
            return SpherePotential.linear(c)
        if len(t["c"]) != k:
            raise ConfigError([("target.c", f"needs {k} entries")])
        return SpherePotential.linear(t["beta"] * np.asarray(t["c"], dtype=float))
    dim = geometry.dim
    kwargs = {"beta": t["beta"]}
    for key in ("variances", "mean"):
        if t[key] is not None:
            if len(t[key]) != dim:
                errors.append((f"target.{key}", f"needs {dim} entries"))
            kwargs[key] = t[key]
    if t["reference_scale"] is not None:
        kwargs["reference_scale"] = t["reference_scale"]
    if t["amplitude"] is not None:
        kwargs["amplitude"] = t["amplitude"]
    if errors:
        raise ConfigError(errors)
    return bi.TARGETS[name](dim, geometry, **kwargs)


def build_spec(cfg, geometry, target):
    r = cfg.recipe
    dim = geometry.dim
    if r["noise"] == "none":
        noise = NoiseModel.zero(dim)
    else:
        noise = bi.make_noise(r["noise"], dim, geometry, target, scale=r["noise_scale"])
    if r["obstruction"] is not None:
        if len(r["obstruction"]) != dim:
            raise ConfigError([("recipe.obstruction", f"needs {dim} entries")])
        if r["bracket"] != "zero":
            raise ConfigError([("recipe.bracket", "combine an obstruction with the zero bracket only")])
        spec = assemble_obstruction(np.asarray(r["obstruction"], dtype=float), target, noise, geometry)
    else:
        params = {} if r["bracket"] == "zero" else {"strength": r["bracket_strength"]}
        bracket = bi.BRACKETS[r["bracket"]](dim, geometry, **params)
        spec = assemble_a_diffusion(bracket, noise, target, geometry)
    return to_ito(spec) if r["convention"] == "ito" else spec


class DiffusionSampler:
    """Unadjusted SDE integration (``em`` on the Itô form, ``heun`` on the Stratonovich form).

    There is no energy to monitor; ``delta_H`` is recorded as 0.
    """

    name = "diffusion"

    def __init__(self, spec, dt, integrator="heun"):
        self.integrator = integrator
        self.dt = dt
        if integrator == "em":
            self.spec, self._step = to_ito(spec), euler_maruyama_step
        else:
            self.spec, self._step = to_stratonovich(spec), stratonovich_heun_step

    def initial_state(self, x=None):
        geo = self.spec.geometry
        x = np.zeros(self.spec.dim) if x is None else np.asarray(x, dtype=float)
        return geo.wrap(x) if isinstance(geo, FlatTorus) else x

    def step(self, state, gen):
        z = gen.standard_normal(self.spec.noise.n_fields)
        return self._step(self.spec, state, self.dt, z).state, True, 0.0

    def flatten(self, state):
        return np.asarray(state), None

    def params(self):
        return {"spec": self.spec.name, "dt": self.dt, "integrator": self.integrator, "biased": True}


def build_sampler(cfg, geometry, target):
    s = cfg.sampler
    sc = SamplerConfig(s["n_iterations"], s["burn_in"], s["dt"], s["n_leapfrog"], s["h"], s["thinning"])
    kind = s["kind"]
    errors = []
    if kind == "mala":
        pre = None if s["preconditioner"] is None else _matrix(s["preconditioner"], geometry.dim,
                                                                 "sampler.preconditioner", errors, spd=True)
        if errors:
            raise ConfigError(errors)
        sampler = MalaSampler(target, sc, pre)
    elif kind == "underdamped":
        M = _matrix(s["mass"], geometry.dim, "sampler.mass", errors, spd=True)
        C = _matrix(s["friction"], geometry.dim, "sampler.friction", errors)
        if C is not None and (not np.allclose(C, C.T) or np.linalg.eigvalsh(0.5 * (C + C.T)).min() < -1e-12):
            errors.append(("sampler.friction", "must be symmetric positive semidefinite"))
        if errors:
            raise ConfigError(errors)
        sampler = UnderdampedSampler(target, M, C, s["dt"])
    elif kind == "ilmcmc_lie":
        sampler = LieSampler(geometry, target, sc)
    elif kind == "ilmcmc_sphere":
        sampler = SphereSampler(geometry, target, sc)
    else:
        sampler = DiffusionSampler(build_spec(cfg, geometry, target), s["dt"], s["integrator"] or "heun")
    initial = None
    if s["initial"] is not None:
        need = {"ilmcmc_lie": geometry.matrix_dim**2 if kind == "ilmcmc_lie" else 0}.get(kind)
        x = np.asarray(s["initial"], dtype=float)
        try:
            if kind == "ilmcmc_lie":
                if x.size != need:
                    raise ConfigError([("sampler.initial", f"needs {need} row-major matrix entries")])
                initial = sampler.initial_state(x.reshape(geometry.matrix_dim, -1))
            else:
                initial = sampler.initial_state(x)
        except MpdiffError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError([("sampler.initial", str(exc))]) from None
    else:
        initial = sampler.initial_state()
    return sampler, sc, initial


# reports


def _moment_entry(chain, name, observable, oracle, provenance, chain_id):
    try:
        mean, se = ergodic_average(chain, observable)
        ess = effective_sample_size(chain, observable)
    except InsufficientDataError as exc:
        return {"name": name, "chain": chain_id, "error": str(exc)}, None
    entry = {"name": name, "chain": chain_id, "estimate": mean, "se": se, "oracle": oracle,
             "provenance": provenance, "z": None}
    if oracle is not None and se > 0:
        entry.update(MomentReport(name, mean, se, oracle, provenance).to_dict())
        entry["chain"] = chain_id
    return entry, {"observable": name, "chain": chain_id, "ess": ess, "n": len(chain)}


def _observables(cfg, geometry, target, sampler):
    """``(name, observable, oracle, provenance)`` tuples with oracles where one is known."""
    out = []
    kind = cfg.geometry["kind"]
    if kind in ("euclidean", "torus"):
        if kind == "torus":
            ranges = [(0.0, L) for L in geometry.period]
            prov = "quadrature over one period"
        else:
            ranges = [(-12.0, 12.0)] * geometry.dim
            prov = "1-d quadrature of the coordinate marginal"
        for j in range(geometry.dim):
            for p in (1, 2):
                oracle = axis_moment(target, j, lambda t, p=p: t**p, *ranges[j])
                out.append((f"x{j}^{p}" if p > 1 else f"x{j}", lambda s, j=j, p=p: s[:, j] ** p, oracle, prov))
    elif kind in ("so3", "sun"):
        oracle, prov = None, None
        if kind == "so3" and target.name in ("zero", "trace"):
            scale = 0.0 if target.is_zero else float(target.value(np.eye(3))) / 3.0
            oracle, prov = so3_trace_mean(scale), "rotation-angle quadrature"
        elif target.is_zero:
            oracle, prov = 0.0, "Haar symmetry"
        n = geometry.matrix_dim
        out.append(("re_tr_g", lambda s: np.real(s[:, :: n + 1].sum(axis=1)), oracle, prov))
    else:
        k = geometry.ambient_dim
        c = target.gradient(np.zeros(k))
        kappa = float(c[-1])
        aligned = not np.any(c[:-1])
        for j in range(k):
            for p in (1, 2):
                oracle, prov = None, None
                if aligned:
                    last = sphere_last_coordinate_moment(kappa, k, p)
                    if j == k - 1:
                        oracle = last
                    else:
                        oracle = 0.0 if p == 1 else (1.0 - sphere_last_coordinate_moment(kappa, k, 2)) / (k - 1)
                    prov = "polar-angle quadrature"
                out.append((f"q{j}^{p}" if p > 1 else f"q{j}", lambda s, j=j, p=p: s[:, j] ** p, oracle, prov))
    return out


def _kl_entries(cfg, geometry, target, chain, chain_id):
    diag = cfg.diagnostics
    kind = cfg.geometry["kind"]
    if not diag["kl"] or kind not in ("euclidean", "torus") or geometry.dim > 2 or len(chain) < diag["kl_windows"]:
        return []
    if kind == "torus":
        bounds = [(0.0, L) for L in geometry.period]
    else:
        bounds = bi.default_bounds(target)
    trace = histogram_kl(chain, target.log_p, bounds, diag["kl_bins"], diag["kl_windows"])
    return [{"chain": chain_id, "iteration": i, "kl": kl, "alpha": trace.alpha} for i, kl, _ in trace.entries]


def _grid_for(cfg, spec):
    v = cfg.verify
    geometry = spec.geometry
    if isinstance(geometry, FlatTorus):
        base = bi.default_grid(spec)
        return GridSpec.for_torus(geometry, v["m"] or base.m, v["stride"] or (base.stride if v["m"] is None else 1))
    base = bi.default_grid(spec)
    bounds = v["bounds"] or base.bounds
    m = v["m"] or base.m
    stride = v["stride"] or (base.stride if v["m"] is None else 1)
    return GridSpec(spec.dim, [tuple(b) for b in bounds], m, stride=stride)


def run_verify(cfg, seed):
    geometry = build_geometry(cfg.geometry)
    target = build_target(cfg, geometry)
    spec = build_spec(cfg, geometry, target)
    v = cfg.verify
    grid = _grid_for(cfg, spec)
    checks, residuals = [], []
    tol = v["tolerance"]
    if v["fokker_planck"]:
        if v["mutants"] and spec.parts:
            report, mutants = fokker_planck_analysis(spec, target, grid, tol)
            muts = [m.to_dict() for m in mutants]
            weak = [m.term for m in mutants if not m.neutral and m.amplification < 100.0]
            checks.append({"kind": "fokker_planck", **report.to_dict(), "mutants": muts,
                           "mutants_passed": not weak, "passed": report.passed and not weak})
        else:
            report = fokker_planck_residual(spec, target, grid, tol)
            checks.append({"kind": "fokker_planck", **report.to_dict()})
        residuals.append(report)
    if v["current"]:
        report = current_residual(spec, target, grid, tol)
        checks.append({**report.to_dict()})
        residuals.append(report)
    if v["generator"]:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
        defect = generator_symmetry_defect(spec, target, n_mc=v["n_mc"], rng=rng)
        checks.append({"kind": "generator", **defect.to_dict(), "passed": defect.passed})
    out = {"meta": {"spec": spec.name, "grid": grid.to_dict(), "seed": seed}, "checks": checks}
    summary = [{"name": r.name, "kind": r.kind, "max_abs": r.max_abs, "h": r.h, "refinement_ratio": r.refinement_ratio,
                "passed": r.passed, "details": VERIFY_FILE} for r in residuals]
    passed = all(c.get("passed", True) for c in checks)
    return out, summary, passed


def run_sampling(cfg, seed):
    geometry = build_geometry(cfg.geometry)
    target = build_target(cfg, geometry)
    sampler, sc, initial = build_sampler(cfg, geometry, target)
    n_chains = cfg.sampler["chains"]

    def one(cid):
        ch = run_chain(sampler, initial, sc, seed, cid)
        ch.meta["geometry"] = cfg.geometry["kind"]
        if cfg.geometry["kind"] in ("so3", "sun"):
            ch.meta["velocity_dim"] = geometry.dim
        return ch

    if n_chains == 1:
        chains = [one(0)]
    else:
        with ThreadPoolExecutor(max_workers=min(n_chains, os.cpu_count() or 1)) as pool:
            chains = list(pool.map(one, range(n_chains)))
    moments, ess, kl = [], [], []
    obs = _observables(cfg, geometry, target, sampler)
    for cid, ch in enumerate(chains):
        for name, f, oracle, prov in obs:
            m, e = _moment_entry(ch, name, f, oracle, prov, cid)
            moments.append(m)
            if e:
                ess.append(e)
        kl.extend(_kl_entries(cfg, geometry, target, ch, cid))
    meta = {
        "sampler": cfg.sampler["kind"],
        "geometry": cfg.geometry["kind"],
        "target": cfg.target["name"],
        "seed": seed,
        "chains": [{"chain": c.meta["chain_id"], "n_stored": len(c), "acceptance_rate": c.acceptance_rate,
                    "nonfinite_proposals": int(np.count_nonzero(c.nonfinite))} for c in chains],
        "parameters": {k: v for k, v in chains[0].meta.items() if k not in ("chain_id",)},
        "kl_smoothing_alpha": KL_ALPHA,
        "biased": bool(chains[0].meta.get("biased", False)),
    }
    return chains, meta, moments, ess, kl


def _chain_name(k):
    return "chain.csv" if k == 0 else f"chain_{k}.csv"


def run_experiment(config, out_dir=None, seed=None, verify_only=False):
    """Run a validated config and write its outputs; returns an exit status.

    Files are written under temporary names and renamed at the end; on
    failure everything this run created is removed.
    """
    cfg = config
    seed = cfg.seed if seed is None else seed
    out_dir = out_dir or cfg.output
    problems = []
    if seed is None:
        problems.append(("seed", "no seed given; pass --seed or set seed in the config"))
    if out_dir is None:
        problems.append(("output", "no output directory; pass --out or set output in the config"))
    if verify_only and cfg.verify is None:
        problems.append(("verify", "the verify subcommand needs a verify table"))
    if problems:
        raise ConfigError(problems)
    created_dir = not os.path.isdir(out_dir)
    written = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        files = {}
        passed = True
        report = {"meta": {}, "moments": [], "ess": [], "kl_trace": [], "residuals": []}
        if cfg.sampler is not None and not verify_only:
            chains, meta, moments, ess, kl = run_sampling(cfg, seed)
            report.update(meta=meta, moments=moments, ess=ess, kl_trace=kl)
            for k, ch in enumerate(chains):
                files[_chain_name(k)] = (write_chain_csv, ch)
            if kl:
                files["kl_trace.csv"] = (write_trace_csv, kl)
        else:
            report["meta"] = {"sampler": None, "geometry": cfg.geometry["kind"], "target": cfg.target["name"],
                              "seed": seed}
        if cfg.verify is not None:
            details, summary, passed = run_verify(cfg, seed)
            report["residuals"] = summary
            report["meta"]["verify"] = VERIFY_FILE
            files[VERIFY_FILE] = (write_report_json, details)
        report["meta"]["config"] = cfg.to_dict()
        files["report.json"] = (write_report_json, report)
        temps = []
        for name, (writer, payload) in files.items():
            tmp = os.path.join(out_dir, f".{name}.partial")
            written.append(tmp)
            writer(payload, tmp)
            temps.append((tmp, os.path.join(out_dir, name)))
        for tmp, final in temps:
            os.replace(tmp, final)
            written.remove(tmp)
            written.append(final)
    except BaseException:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        if created_dir:
            try:
                os.rmdir(out_dir)
            except OSError:
                pass
        raise
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def list_builtins():
    lines = [
        "geometries: euclidean, torus, so3, sun, sphere",
        "targets (euclidean): gaussian, double_well",
        "targets (torus): torus_cosine, uniform",
        "potentials (so3, sun): zero, trace, linear",
        "potentials (sphere): zero, vmf, linear",
        "brackets: " + ", ".join(bi.BRACKETS),
        "noise: " + ", ".join(bi.NOISES) + ", none",
        "samplers: mala, underdamped, ilmcmc_lie, ilmcmc_sphere, diffusion",
        "integrators: em, heun (diffusion); ou_exact (underdamped); lie_leapfrog (ilmcmc_lie); geodesic (ilmcmc_sphere)",
    ]
    return "\n".join(lines)


def _seed_arg(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def make_parser():
    parser = argparse.ArgumentParser(prog="mpdiff", description="Measure-preserving diffusions and samplers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the sampler (and verify table, if any)"), ("verify", "run the verify table only")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", help="output directory (overrides 'output' in the config)")
        p.add_argument("--seed", type=_seed_arg, help="64-bit seed (overrides 'seed' in the config)")
    sub.add_parser("list-builtins", help="list named built-ins usable in configs")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.command == "list-builtins":
        print(list_builtins())
        return EXIT_OK
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        return run_experiment(cfg, args.out, args.seed, verify_only=args.command == "verify")
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path + ': ' if path else ''}{msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    except MpdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
