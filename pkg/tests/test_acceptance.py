"""Acceptance criteria 1-12, each at its stated tolerance and runtime budget.

Every test prints one PASS or FAIL line; the lines are repeated in the
``acceptance criteria`` section of the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import ks_2samp

from mpdiff import builtins as bi
from mpdiff.cli import main
from mpdiff.diagnostics import ergodic_average, histogram_kl
from mpdiff.geometry import EmbeddedSphere, FlatTorus, MatrixLieGroup, haar_sample
from mpdiff.integrators import LiePotential, SpherePotential, lie_leapfrog_chart_map, lie_leapfrog_trajectory, ou_exact_step
from mpdiff.oracles import so3_euler_expectation, sphere_last_coordinate_moment, vmf_mean_closed_form
from mpdiff.recipe import (
    AntisymmetricBracket,
    NoiseModel,
    assemble_a_diffusion,
    assemble_obstruction,
    conservative_field,
    euclidean_recipe_drift,
    to_ito,
)
from mpdiff.samplers import LieSampler, MalaSampler, SamplerConfig, SphereSampler, run_chain
from mpdiff.verify import (
    GridSpec,
    RejectionSampler,
    TestFunctionData,
    default_test_functions,
    fokker_planck_analysis,
    fokker_planck_residual,
    generator_symmetry_defect,
    kl_decay_trace,
    symmetric_pieces,
    volume_jacobian_check,
)

SO3 = MatrixLieGroup.so(3)


def trace(g):
    return np.trace(g, axis1=-2, axis2=-1)


def test_criterion_01_recipe_matches_ito_a_diffusion(acceptance):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        r = np.random.default_rng(seed)
        dim = 1 + seed % 3
        target = bi.gaussian(dim) if seed % 2 else bi.double_well(dim)
        q = r.standard_normal((dim, dim))
        bracket = AntisymmetricBracket.constant(q - q.T)
        noise = NoiseModel.constant(r.standard_normal((dim, int(r.integers(1, 4)))))
        x = r.standard_normal((20, dim))
        spec = to_ito(assemble_a_diffusion(bracket, noise, target))
        worst = max(worst, float(np.max(np.abs(spec.drift_at(x) - euclidean_recipe_drift(bracket, noise, target, x)))))
    ok = acceptance.record(1, "recipe vs Ito A-diffusion", worst <= 1e-10, f"max |diff| = {worst:.2e} over 100 pairs",
                           start, 5)
    assert ok


def test_criterion_02_stationarity_residuals_and_mutants(acceptance):
    start = time.perf_counter()
    specs = bi.builtin_catalog()
    failures, worst_res, ratios, weakest = [], 0.0, [], math.inf
    for spec in specs:
        report, mutants = fokker_planck_analysis(spec, grid=bi.default_grid(spec))
        worst_res = max(worst_res, report.max_abs)
        ratios.append(report.refinement_ratio)
        good = report.max_abs <= 1e-3 and 3.5 <= report.refinement_ratio <= 4.5
        for m in mutants:
            if not m.neutral:
                weakest = min(weakest, m.amplification)
                good = good and m.amplification >= 100
        if not good:
            failures.append(spec.name)
    detail = (f"{len(specs)} specs, max residual {worst_res:.2e}, ratios [{min(ratios):.3f}, {max(ratios):.3f}], "
              f"weakest mutant x{weakest:.3g}, failures {failures or 'none'}")
    ok = acceptance.record(2, "stationarity residuals", not failures, detail, start, 120)
    assert ok


def test_criterion_03_exact_ou_kernel(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    n, v0 = 10**6, 1.5
    zs = []
    for h in (0.1, 0.5, 2.0):
        v = ou_exact_step(np.full(n, v0), h, rng.standard_normal(n))
        mean_z = (v.mean() - math.exp(-h / 2) * v0) / (v.std(ddof=1) / math.sqrt(n))
        var = v.var(ddof=1)
        # SE of the sample variance from the fourth central moment
        var_se = math.sqrt((np.mean((v - v.mean()) ** 4) - var**2) / n)
        zs += [mean_z, (var - (1 - math.exp(-h))) / var_se]
    worst = max(abs(z) for z in zs)
    ok = acceptance.record(3, "exact OU kernel", worst <= 4, f"max |z| = {worst:.2f} over mean and variance", start, 10)
    assert ok


def test_criterion_04_lie_leapfrog_structure(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    V = LiePotential.linear(rng.standard_normal((3, 3)))
    det_dev, rev = 0.0, 0.0
    for _ in range(20):
        g0, v0 = haar_sample(SO3, rng), rng.standard_normal(3)
        step = lie_leapfrog_chart_map(SO3, V, g0, 0.1, 10)(v0)
        det_dev = max(det_dev, volume_jacobian_check(step, [np.concatenate([np.zeros(3), v0])]))
        g1, v1, _ = lie_leapfrog_trajectory(SO3, V, g0, v0, 0.1, 10)
        g2, v2, _ = lie_leapfrog_trajectory(SO3, V, g1, -v1, 0.1, 10)
        rev = max(rev, float(np.linalg.norm(g2 - g0)), float(np.linalg.norm(v2 + v0)))
    g0, v0 = haar_sample(SO3, rng), rng.standard_normal(3)
    errs = [abs(lie_leapfrog_trajectory(SO3, V, g0, v0, 1.0 / n, n)[2]) for n in (10, 20, 40)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = det_dev <= 1e-6 and rev <= 1e-10 and all(3.5 <= r <= 4.5 for r in ratios)
    detail = f"|det J - 1| = {det_dev:.1e}, reversibility {rev:.1e}, energy ratios {ratios[0]:.3f}, {ratios[1]:.3f}"
    assert acceptance.record(4, "Lie leapfrog structure", ok, detail, start, 30)


def test_criterion_05_haar_recovery(acceptance):
    start = time.perf_counter()
    burn, n = 1000, 10**5
    config = SamplerConfig(burn + n, burn_in=burn + 1, dt=0.25, n_leapfrog=10, h=5.0)
    sampler = LieSampler(SO3, LiePotential.zero(3), config)
    chain = run_chain(sampler, sampler.initial_state(), config, 5)
    tr_chain = trace(chain.samples.reshape(-1, 3, 3))
    oracle = trace(haar_sample(SO3, np.random.default_rng(55), size=10**6))
    stat = ks_2samp(tr_chain, oracle).statistic
    m = len(oracle)
    critical = 1.628 * math.sqrt((len(tr_chain) + m) / (len(tr_chain) * m))
    ok = stat < critical and chain.acceptance_rate == 1.0 and len(tr_chain) == n
    detail = f"KS {stat:.5f} vs 1% critical {critical:.5f}, acceptance {chain.acceptance_rate}"
    assert acceptance.record(5, "iLMCMC Haar recovery", ok, detail, start, 120)


def test_criterion_06_ilmcmc_with_potential(acceptance):
    start = time.perf_counter()
    oracle = so3_euler_expectation(trace, lambda g: -trace(g))
    config = SamplerConfig(60000, burn_in=1000, dt=0.05, n_leapfrog=20, h=0.5)
    sampler = LieSampler(SO3, LiePotential.trace(3), config)
    chain = run_chain(sampler, sampler.initial_state(), config, 6)
    mean, se = ergodic_average(chain, lambda s: s[:, 0] + s[:, 4] + s[:, 8])
    # the quadrature oracle contributes no sampling error to the combined SE
    z = (mean - oracle) / se
    detail = f"<Tr g> = {mean:.5f} +- {se:.5f}, Euler quadrature {oracle:.10f}, z = {z:.2f}"
    assert acceptance.record(6, "iLMCMC with V = Tr g", abs(z) <= 4, detail, start, 300)


def test_criterion_07_sphere_sampler(acceptance):
    start = time.perf_counter()
    sphere = EmbeddedSphere(3)
    kappa = 2.0
    oracle = sphere_last_coordinate_moment(kappa, 3, 1)
    config = SamplerConfig(20000, burn_in=500, dt=0.2, n_leapfrog=8, h=1.0)
    vmf = SphereSampler(sphere, SpherePotential.linear([0.0, 0.0, kappa]), config)
    mean, se = ergodic_average(run_chain(vmf, vmf.initial_state(), config, 7), lambda s: s[:, 2])
    zs = {"vmf <q3>": (mean - oracle) / se}
    uniform = SphereSampler(sphere, SpherePotential.zero(3), config)
    chain = run_chain(uniform, uniform.initial_state(), config, 8)
    for i in range(3):
        m1, s1 = ergodic_average(chain, lambda s, i=i: s[:, i])
        m2, s2 = ergodic_average(chain, lambda s, i=i: s[:, i] ** 2)
        zs[f"<q{i}>"] = m1 / s1
        zs[f"<q{i}^2>"] = (m2 - 1.0 / 3.0) / s2
    worst = max(abs(z) for z in zs.values())
    closed = abs(oracle - vmf_mean_closed_form(kappa))
    detail = f"vMF z = {zs['vmf <q3>']:.2f} (oracle {oracle:.10f}, closed form diff {closed:.1e}), max |z| {worst:.2f}"
    assert acceptance.record(7, "sphere sampler", worst <= 4, detail, start, 120)


def test_criterion_08_mala(acceptance):
    start = time.perf_counter()
    zs = []
    for dim in range(1, 6):
        target = bi.gaussian(dim, variances=np.ones(dim))
        config = SamplerConfig(20000, burn_in=500, dt=0.5)
        sampler = MalaSampler(target, config)
        chain = run_chain(sampler, sampler.initial_state(), config, 80 + dim)
        for i in range(dim):
            m, se = ergodic_average(chain, lambda s, i=i: s[:, i] ** 2)
            zs.append((m - 1.0) / se)
    small = SamplerConfig(5000, dt=1e-4)
    sampler = MalaSampler(bi.gaussian(3, variances=np.ones(3)), small)
    rate = run_chain(sampler, sampler.initial_state(), small, 88).acceptance_rate
    worst = max(abs(z) for z in zs)
    ok = worst <= 4 and rate >= 0.99
    detail = f"max |z| of variance {worst:.2f} over 15 coordinates, acceptance {rate:.4f} at dt = 1e-4"
    assert acceptance.record(8, "MALA", ok, detail, start, 60)


def test_criterion_09_kl_monotonicity(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    spec = to_ito(assemble_a_diffusion(bi.constant_bracket(2), bi.isotropic(2), bi.gaussian(2, variances=[1.0, 0.5])))
    times = np.linspace(0.0, 6.0, 61)
    worst_increase = -math.inf
    for _ in range(20):
        a = rng.standard_normal((2, 2))
        cov = a @ a.T + 0.05 * np.eye(2)
        kl = np.array([v for _, v in kl_decay_trace(spec, rng.normal(0.0, 2.0, 2), cov, times)])
        worst_increase = max(worst_increase, float(np.max(np.diff(kl))))
    target = bi.double_well(1)
    config = SamplerConfig(2000, dt=0.1)
    sampler = MalaSampler(target, config)
    decreases = 0
    for seed in range(50):
        chain = run_chain(sampler, np.array([2.4]), config, 900 + seed)
        trace_kl = histogram_kl(chain, target.log_p, [(-2.6, 2.6)], 26, windows=10)
        decreases += trace_kl[0][1] > trace_kl[-1][1]
    ok = worst_increase <= 1e-12 and decreases >= 48
    detail = f"max step increase {worst_increase:.1e} over 20 inits, histogram decrease in {decreases}/50 runs"
    assert acceptance.record(9, "KL monotonicity", ok, detail, start, 180)


def test_criterion_10_generator_decomposition(acceptance):
    start = time.perf_counter()
    data, pieces = {}, {}
    worst, positive, count = 0.0, [], 0
    for spec in bi.builtin_catalog():
        key = id(spec.target)
        if key not in data:
            x = RejectionSampler(spec.target).sample(10**6, np.random.default_rng(1000 + len(data)))
            data[key] = TestFunctionData.evaluate(*default_test_functions(spec.target), x)
        pkey = (key, id(spec.noise))
        if pkey not in pieces:
            pieces[pkey] = symmetric_pieces(spec.noise, spec.target, data[key])
        d = generator_symmetry_defect(spec, pieces=pieces[pkey])
        worst = max(worst, abs(d.antisym_z), abs(d.sym_z), abs(d.dissipativity_z))
        if d.dissipativity_mean > 0:
            positive.append(spec.name)
        count += 1
    ok = worst <= 4 and not positive
    detail = f"{count} specs at n_mc = 1e6, max |z| {worst:.2f}, positive dissipativity {positive or 'none'}"
    assert acceptance.record(10, "generator decomposition", ok, detail, start, 60)


def test_criterion_11_torus_obstruction(acceptance):
    start = time.perf_counter()
    worst = 0.0
    for dim, c in ((1, [0.7]), (2, [0.7, -1.3])):
        torus = FlatTorus(dim, (1.0,) * dim)
        grid = GridSpec.for_torus(torus, 32)
        for target, noise in ((bi.uniform(dim, torus), bi.isotropic(dim, torus)),
                              (bi.torus_cosine(dim, torus), None)):
            spec = assemble_obstruction(c, target, noise)
            worst = max(worst, fokker_planck_residual(spec, grid=grid).max_abs)
    # under the uniform law a bracket drift is the divergence of a periodic bivector, so its torus mean vanishes
    torus = FlatTorus(2, (1.0, 1.0))
    flat = bi.uniform(2, torus)
    pts = GridSpec.for_torus(torus, 64).points().reshape(-1, 2)
    bracket_mean = max(float(np.max(np.abs(conservative_field(bi.BRACKETS[b](2, torus), flat, pts).mean(axis=0))))
                       for b in bi.BRACKETS)
    obstruction_mean = assemble_obstruction([0.7, -1.3], flat).drift_at(pts).mean(axis=0)
    ok = worst <= 1e-10 and bracket_mean <= 1e-10 and np.allclose(obstruction_mean, [0.7, -1.3], rtol=0, atol=1e-12)
    detail = f"max residual {worst:.1e} on T^1 and T^2, bracket drift torus mean {bracket_mean:.1e}, obstruction mean (0.7, -1.3)"
    assert acceptance.record(11, "torus obstruction", ok, detail, start, 5)


CONFIGS = {
    "mala": 'kind = "euclidean"\ndim = 2\n[target]\nname = "double_well"\n[sampler]\nkind = "mala"\nn_iterations = 300\ndt = 0.2\n',
    "lie": 'kind = "so3"\n[target]\nname = "trace"\n[sampler]\nkind = "ilmcmc_lie"\nn_iterations = 200\ndt = 0.1\nn_leapfrog = 5\n',
    "sphere": 'kind = "sphere"\nambient_dim = 3\n[target]\nname = "vmf"\nkappa = 2.0\n[sampler]\nkind = "ilmcmc_sphere"\nn_iterations = 200\ndt = 0.2\n',
    "underdamped": 'kind = "euclidean"\ndim = 1\n[target]\nname = "gaussian"\n[sampler]\nkind = "underdamped"\nn_iterations = 300\ndt = 0.1\n',
}


def test_criterion_12_determinism(tmp_path, acceptance):
    start = time.perf_counter()
    same = {}
    for name, body in CONFIGS.items():
        path = tmp_path / f"{name}.toml"
        path.write_text("seed = 12\n[geometry]\n" + body)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}_{run}"
            assert main(["run", "--config", str(path), "--out", str(out)]) == 0
            outs.append((out / "chain.csv").read_bytes())
        same[name] = outs[0] == outs[1]
    ok = all(same.values())
    detail = ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items())
    assert acceptance.record(12, "determinism", ok, detail, start, 30)
