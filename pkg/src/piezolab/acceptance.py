"""Acceptance checks: the property suite that gates a release.

Each check builds what it needs, measures one quantitative property of the
discretization at a pinned tolerance, and returns a CheckResult.  The CLI
``paper-suite`` subcommand and tests/test_acceptance.py both drive
:func:`run_all`.  Assemblies and spectra are cached per (params, N) because
several checks share them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import admissibility_estimate, default_dt, run
from .generator import assemble_generator, skewness_defect
from .model import StateVector, build_grid, toy_parameters, validate_parameters
from .operators import assemble_mass, build_operators, p_xi_identity_check
from .spectral import (closed_loop_mode_shifts, compute_spectrum, decay_rate_fit,
                       kernel_basis)
from .variants import (assemble_electrostatic, boundary_feedback_simulate,
                       charge_magnetic_influence, electrostatic_mode_state)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: str
    tolerance: str
    details: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.measured} (tolerance {self.tolerance})"


_cache: dict = {}


def _gamma0_params():
    return validate_parameters(dict(rho=1.0, alpha=1.0, gamma=0.0, eps1=1.0,
                                    eps3=1.0, mu=1.0, h=1.0, L=1.0))


def _assembly(n_cells: int, gamma: float = 1.0):
    key = ("asm", n_cells, gamma)
    if key not in _cache:
        params = toy_parameters() if gamma == 1.0 else _gamma0_params()
        _cache[key] = assemble_generator(params, build_grid(params.L, n_cells))
    return _cache[key]


def _spectrum(n_cells: int, gamma: float = 1.0):
    key = ("spec", n_cells, gamma)
    if key not in _cache:
        _cache[key] = compute_spectrum(_assembly(n_cells, gamma))
    return _cache[key]


def _conservation_series():
    """Shared 1e4-step open-loop trajectory for checks 2 and 3."""
    key = ("run10k",)
    if key not in _cache:
        params = toy_parameters()
        grid = build_grid(params.L, 32)
        asm = _assembly(32)
        rng = np.random.default_rng(7)
        y0 = StateVector.gauge_projected(rng.standard_normal(32),
                                         rng.standard_normal(31),
                                         rng.standard_normal(33),
                                         rng.standard_normal(31), grid, params)
        dt = default_dt(params, grid)
        _cache[key] = run(asm, y0, 10_000, dt, record_stride=100,
                          gauge_guard="full", gauge_tol=1e-8)
    return _cache[key]


def _em_modes(report):
    """Electromagnetic modes with positive frequency, sorted, 1-indexed by k."""
    recs = [r for r in report.mode_table
            if r.dominant_block == "electromagnetic" and r.eigenvalue.imag > 1e-8]
    recs.sort(key=lambda r: r.eigenvalue.imag)
    return recs


def check_skewness() -> CheckResult:
    """1: relative skewness defect of M G at machine level."""
    tol = 1e-12
    rng = np.random.default_rng(12345)
    param_sets = [toy_parameters()]
    for _ in range(3):
        raw = {name: float(rng.uniform(0.5, 2.0))
               for name in ("rho", "alpha", "eps1", "eps3", "mu", "h", "L")}
        raw["gamma"] = float(rng.uniform(-2.0, 2.0))
        param_sets.append(validate_parameters(raw))
    worst = 0.0
    for params in param_sets:
        for n in (16, 64):
            asm = assemble_generator(params, build_grid(params.L, n))
            worst = max(worst, skewness_defect(asm))
    return CheckResult("skewness", worst <= tol,
                       f"max defect {worst:.3e}", f"<= {tol:.0e}",
                       "toy units plus three seeded random parameter sets, "
                       "N in {16, 64}")


def check_conservation() -> CheckResult:
    """2: open-loop energy drift over 1e4 midpoint steps."""
    tol = 1e-9
    ts = _conservation_series()
    e = ts.total_energy()
    drift = float(np.max(np.abs(e - e[0])) / e[0])
    return CheckResult("conservation", drift <= tol,
                       f"relative drift {drift:.3e}", f"<= {tol:.0e}",
                       "toy units, N=32, random constrained data, default dt")


def check_gauge() -> CheckResult:
    """3: gauge residuals along the same 1e4-step trajectory."""
    tol = 1e-10
    ts = _conservation_series()
    worst = float(max(ts.gauge_pos.max(), ts.gauge_vel.max()))
    return CheckResult("gauge", worst <= tol,
                       f"max residual {worst:.3e}", f"<= {tol:.0e}")


def check_imaginary_spectrum() -> CheckResult:
    """4: spectral abscissa relative to the spectral radius at N=128."""
    rep = _spectrum(128)
    rel = rep.max_abs_real / rep.g_norm
    tol = 1e-10
    return CheckResult("imaginary_spectrum", rel <= tol,
                       f"max|Re|/max|lambda| {rel:.3e}", f"<= {tol:.0e}",
                       f"max|Re| = {rep.max_abs_real:.3e}, "
                       f"max|lambda| = {rep.g_norm:.3e}")


def check_pxi_identity() -> CheckResult:
    """5: exact algebraic identity of the Helmholtz inverse, plus its range."""
    tol = 1e-12
    worst_id = 0.0
    spec_ok = True
    lo = hi = None
    for params, n in ((toy_parameters(), 16), (toy_parameters(), 64),
                      (_gamma0_params(), 64)):
        ops = build_operators(params, build_grid(params.L, n))
        worst_id = max(worst_id, p_xi_identity_check(ops))
        ev = np.linalg.eigvalsh(ops.p_dense)
        lo, hi = float(ev.min()), float(ev.max())
        if lo <= 0.0 or hi > 1.0 + tol:
            spec_ok = False
    passed = worst_id <= tol and spec_ok
    return CheckResult("pxi_identity", passed,
                       f"identity {worst_id:.3e}, spectrum [{lo:.3e}, {hi:.10f}]",
                       f"identity <= {tol:.0e}, spectrum in (0, 1]")


def check_dispersion() -> CheckResult:
    """6: analytic dispersion at gamma=0 with second-order refinement."""
    p = _gamma0_params()
    rep64, rep128 = _spectrum(64, 0.0), _spectrum(128, 0.0)

    def freqs(rep, block):
        vals = [r.eigenvalue.imag for r in rep.mode_table
                if r.dominant_block == block and r.eigenvalue.imag > 1e-8]
        return sorted(vals)

    ratios = []
    mech_t = [k * np.pi * np.sqrt(p.alpha / p.rho) / p.L for k in range(1, 6)]
    em_t = [np.sqrt(p.mu * (1 + p.xi * (k * np.pi / p.L) ** 2)
                    / (p.eps1 * p.h ** 2 / 12)) for k in range(1, 6)]
    for block, targets in (("mechanical", mech_t), ("electromagnetic", em_t)):
        f64, f128 = freqs(rep64, block), freqs(rep128, block)
        for k, t in enumerate(targets):
            ratios.append(abs(f64[k] - t) / abs(f128[k] - t))
    ratios = np.array(ratios)
    ok = bool(np.all((ratios >= 3.5) & (ratios <= 4.5)))
    return CheckResult("dispersion", ok,
                       f"ratios in [{ratios.min():.3f}, {ratios.max():.3f}]",
                       "4.0 +/- 0.5 under N doubling (64 to 128)",
                       "lowest five mechanical and electromagnetic modes")


def _matched_closed_loop(n_cells: int, gain: float):
    """(record, closed-loop eigenvalue) pairs for EM modes at gamma=0."""
    rep = _spectrum(n_cells, 0.0)
    asm = _assembly(n_cells, 0.0)
    om, lam, _ = closed_loop_mode_shifts(asm, gain)
    pairs = []
    for rec in _em_modes(rep):
        w = rec.eigenvalue.imag
        j = int(np.argmin(np.abs(om - w)))
        pairs.append((rec, lam[j]))
    return pairs


def check_stabilizability() -> CheckResult:
    """7: even/odd electromagnetic split under unit collocated feedback.

    Even modes must be numerically invisible to the control and stay
    undamped; odd modes must move strictly left of -1e-6.  The high-odd
    tail has first-order shifts k*|B*phi|^2 that fall below that threshold
    on this grid no matter the solver, so the odd clause fails honestly
    there; the details table records every mode.
    """
    pairs = _matched_closed_loop(64, 1.0)
    even_fail, odd_fail = [], []
    lines = []
    for k, (rec, lam) in enumerate(pairs, start=1):
        if k % 2 == 0:
            ok = (rec.bstar_abs <= 1e-8 * rec.norm_m and abs(lam.real) <= 1e-8)
            if not ok:
                even_fail.append(k)
        else:
            ok = lam.real < -1e-6
            if not ok:
                odd_fail.append(k)
            lines.append(f"k={k:3d} omega={rec.eigenvalue.imag:9.3f} "
                         f"|B*phi|={rec.bstar_abs:.3e} Re={lam.real:+.3e}"
                         + ("" if ok else "  below threshold"))
    passed = not even_fail and not odd_fail
    measured = (f"even failures {len(even_fail)}, odd failures {len(odd_fail)} "
                f"of {len(pairs)} EM modes")
    return CheckResult("stabilizability", passed, measured,
                       "even: |B*phi| <= 1e-8 and |Re| <= 1e-8; odd: Re < -1e-6",
                       "\n".join(lines))


def check_gain_perturbation() -> CheckResult:
    """8: measured Re lambda(k) against the first-order collocated formula.

    The prediction -k |B*phi|^2 / ||phi||_M^2 uses the Gram normalization
    in which the energy is half the squared norm; modes carry unit M-norm.
    """
    rep = _spectrum(64)
    asm = _assembly(64)
    stab = [r for r in rep.mode_table
            if r.stabilizable and r.eigenvalue.imag > 1e-8]
    stab.sort(key=lambda r: r.eigenvalue.imag)
    worst = 0.0
    lines = []
    for gain in (1e-3, 1e-2):
        om, lam, _ = closed_loop_mode_shifts(asm, gain)
        for rec in stab[:3]:
            w = rec.eigenvalue.imag
            j = int(np.argmin(np.abs(om - w)))
            pred = -gain * rec.bstar_abs ** 2 / rec.norm_m ** 2
            rel = abs(lam[j].real - pred) / abs(pred)
            worst = max(worst, rel)
            lines.append(f"gain={gain:g} omega={w:.4f}: measured "
                         f"{lam[j].real:.6e} predicted {pred:.6e} "
                         f"rel {rel:.2e}")
    return CheckResult("gain_perturbation", worst <= 0.10,
                       f"worst relative error {worst:.3e}", "<= 10%",
                       "\n".join(lines))


def check_no_uniform_margin() -> CheckResult:
    """9: closed-loop damping of the top frequency decade shrinks with k.

    At gamma=0 the stabilizable family is exactly the odd electromagnetic
    branch; the per-mode decay |Re lambda| must decrease monotonically
    (5% jitter allowed) across the top decade at N=256, which is the
    discrete signature that no uniform exponential margin exists.
    """
    pairs = _matched_closed_loop(256, 1.0)
    stab = [(rec.eigenvalue.imag, abs(lam.real)) for rec, lam in pairs
            if rec.bstar_abs > 1e-8 * rec.norm_m]
    stab.sort()
    ws = np.array([s[0] for s in stab])
    res = np.array([s[1] for s in stab])
    sel = ws > ws.max() / 10.0
    top = res[sel]
    viol = int(sum(top[j + 1] > top[j] * 1.05 for j in range(top.size - 1)))
    return CheckResult("no_uniform_margin", viol == 0,
                       f"{viol} violations over {top.size} top-decade modes",
                       "monotone decrease, 5% jitter",
                       f"|Re| spans [{top.min():.3e}, {top.max():.3e}] "
                       f"for omega in ({ws.max()/10:.1f}, {ws.max():.1f}]")


def check_electrostatic_decay() -> CheckResult:
    """10: exponential decay of the boundary-damped clamped-free system."""
    params = toy_parameters()
    rates = {}
    r2 = {}
    for n in (64, 128):
        grid = build_grid(params.L, n)
        es = assemble_electrostatic(params, grid)
        y0 = electrostatic_mode_state(es, 0)
        ts = boundary_feedback_simulate(es, 1.0, y0, 8.0, record_stride=4)
        fit = decay_rate_fit(ts, (0.5, 7.5))
        rates[n], r2[n] = fit.rate, fit.r_squared
    rel = abs(rates[64] - rates[128]) / rates[128]
    passed = (rates[64] > 0 and rates[128] > 0
              and r2[64] >= 0.99 and r2[128] >= 0.99 and rel <= 0.10)
    return CheckResult("electrostatic_decay", passed,
                       f"rates {rates[64]:.4f}/{rates[128]:.4f} "
                       f"(rel {rel:.3f}), R2 {r2[64]:.4f}/{r2[128]:.4f}",
                       "rate > 0, R2 >= 0.99, +/-10% under N doubling",
                       "toy units, k=1, first mode, fit window (0.5, 7.5)")


def check_admissibility() -> CheckResult:
    """11: input-to-state gain estimate stable under refinement."""
    vals = {}
    for n in (32, 64):
        vals[n] = admissibility_estimate(25, 1.0, _assembly(n), seed=42)
    rel = abs(vals[64] - vals[32]) / vals[32]
    passed = np.isfinite(vals[32]) and np.isfinite(vals[64]) and rel <= 0.20
    return CheckResult("admissibility", bool(passed),
                       f"c(T) = {vals[32]:.4f} (N=32), {vals[64]:.4f} (N=64), "
                       f"spread {rel:.4f}", "finite, +/-20% across grids",
                       "25 trials, T=1, seed 42")


def check_kernel_audit() -> CheckResult:
    """12: the zero mode is the rigid translation, reproducibly across N.

    The continuum argument suggests a much larger stationary set; the
    discrete constrained kernel measures exactly one dimension at every
    resolution, and that discrepancy is recorded here rather than scored.
    """
    dims = {}
    worst_proj = 0.0
    for n in (32, 64, 128):
        asm = _assembly(n)
        basis = kernel_basis(asm)
        dims[n] = basis.shape[1]
        grid = asm.grid
        y_tr = np.zeros(asm.dim)
        y_tr[3 * grid.n_cells - 1: 4 * grid.n_cells] = 1.0
        m = asm.m
        y_tr = y_tr / np.sqrt(float(y_tr @ m @ y_tr))
        coeff = basis.T @ (m @ y_tr)
        resid = y_tr - basis @ coeff
        worst_proj = max(worst_proj, float(np.sqrt(abs(resid @ m @ resid))))
    reproducible = len(set(dims.values())) == 1
    passed = reproducible and worst_proj <= 1e-8
    details = (f"measured kernel dimension {dims} on the constrained subspace; "
               "the unconstrained stationary set (constant eta with matching "
               "potential) is infinite-dimensional in the continuum limit, a "
               "documented discrepancy that is not scored")
    return CheckResult("kernel_audit", passed,
                       f"dims {sorted(set(dims.values()))}, translation "
                       f"residual {worst_proj:.3e}",
                       "same dimension across N, residual <= 1e-8", details)


def check_charge_norm_growth() -> CheckResult:
    """13: boundary charge influence norm grows under refinement."""
    params = toy_parameters()
    norms = []
    for n in (32, 64, 128, 256):
        grid = build_grid(params.L, n)
        ops = build_operators(params, grid)
        m = assemble_mass(params, grid, ops)
        b = charge_magnetic_influence(params, grid)
        norms.append(float(np.sqrt(b @ m @ b)))
    mono = all(norms[i] < norms[i + 1] for i in range(3))
    return CheckResult("charge_norm_growth", mono,
                       "norms " + ", ".join(f"{v:.2f}" for v in norms),
                       "strictly increasing over N in {32, 64, 128, 256}",
                       "||b||_M = (2|gamma|/(eps3 h)) / sqrt(rho dx)")


ALL_CHECKS = (
    check_skewness,
    check_conservation,
    check_gauge,
    check_imaginary_spectrum,
    check_pxi_identity,
    check_dispersion,
    check_stabilizability,
    check_gain_perturbation,
    check_no_uniform_margin,
    check_electrostatic_decay,
    check_admissibility,
    check_kernel_audit,
    check_charge_norm_growth,
)


def run_all(only: str | None = None) -> list:
    """Run every check (or those whose name contains ``only``)."""
    results = []
    for fn in ALL_CHECKS:
        name = fn.__name__.removeprefix("check_")
        if only is not None and only not in name:
            continue
        results.append(fn())
    if only is not None and not results:
        names = ", ".join(f.__name__.removeprefix("check_") for f in ALL_CHECKS)
        raise ValueError(f"no check matches {only!r}; available: {names}")
    return results
