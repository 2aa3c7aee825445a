"""Eigenstructure in the energy inner product and stabilizability analysis.

All spectra are computed on the gauge-constrained subspace, where the Gram
matrix is positive definite: with M_red = R^T R (Cholesky), the matrix
S = R G_red R^{-1} is similar to the reduced generator and skew-symmetric up
to rounding, so an honest dense eigensolve of S measures how imaginary the
spectrum really is.  Closed-loop spectra perturb S by the rank-one collocated
feedback -k g g^T with g = R b_red, whose symmetric negative-semidefinite
structure forces Re(lambda) <= 0.

For the high-frequency tail the dense solver's noise floor (about
machine epsilon times ||S||) swamps the true decay rates, which shrink like
1/omega^2; ``closed_loop_mode_shifts`` therefore also solves the exact
rank-one secular equation in the eigenbasis of the skew part, giving each
mode's shift with small relative error.  The two routes agree wherever the
dense solver can resolve the shift, which the test suite checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AssemblyInconsistent, DegenerateWindow
from .generator import GeneratorAssembly
from .model import block_slices

DENSE_DIM_GUARD = 6 * 1024
ZERO_MODE_REL_TOL = 1e-10
CLOSED_LOOP_REAL_TOL = 1e-12


@dataclass(frozen=True)
class ModeRecord:
    """Per-mode summary used for stabilizability classification."""

    eigenvalue: complex
    bstar: complex
    bstar_abs: float
    norm_m: float
    stabilizable: bool
    dominant_block: str  # mechanical | electromagnetic | mixed


@dataclass(frozen=True)
class SpectrumReport:
    """Spectrum of one assembly, sorted by |Im|, positive imaginary part first."""

    eigenvalues: np.ndarray
    max_abs_real: float
    kernel_dimension: int
    mode_table: list = field(repr=False)
    vectors_reduced: np.ndarray = field(repr=False)   # columns: phi_red, unit M-norm
    g_norm: float = 0.0          # spectral radius, the scale for tolerances
    gain: float = 0.0

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["re", "im", "bstar_abs", "stabilizable", "dominant_block"])
            for rec in self.mode_table:
                writer.writerow([f"{rec.eigenvalue.real:.17g}",
                                 f"{rec.eigenvalue.imag:.17g}",
                                 f"{rec.bstar_abs:.17g}",
                                 int(rec.stabilizable), rec.dominant_block])


def _energy_similarity(assembly: GeneratorAssembly):
    """R (upper Cholesky of M_red) and S = R G_red R^{-1}."""
    from .operators import mass_cholesky

    red = assembly.reduction
    r = mass_cholesky(red.m_red)
    z = r @ red.g_red
    s = scipy.linalg.solve_triangular(r.T, z.T, lower=True).T
    return r, s


def _sort_order(values: np.ndarray) -> np.ndarray:
    # |Im| ascending, positive imaginary part first among a conjugate pair
    return np.lexsort((values.real, -np.sign(values.imag), np.abs(values.imag)))


def _mechanical_fraction(phi_full: np.ndarray, assembly: GeneratorAssembly) -> float:
    sl = block_slices(assembly.grid)
    m = assembly.m
    idx_mech = np.r_[np.arange(m.shape[0])[sl["y1"]], np.arange(m.shape[0])[sl["y4"]]]
    pm = phi_full[idx_mech]
    mech = float(np.real(np.conj(pm) @ m[np.ix_(idx_mech, idx_mech)] @ pm))
    total = float(np.real(np.conj(phi_full) @ m @ phi_full))
    if total <= 0.0:
        return 0.0
    return mech / total


def _build_report(assembly: GeneratorAssembly, s_matrix: np.ndarray, r: np.ndarray,
                  eig_tol: float, gain: float) -> SpectrumReport:
    w, v = scipy.linalg.eig(s_matrix)
    order = _sort_order(w)
    w = w[order]
    v = v[:, order]

    phi_red = scipy.linalg.solve_triangular(r, v)  # unit M-norm columns
    t = assembly.reduction.t_map
    g_norm = float(np.max(np.abs(w))) if len(w) else 0.0
    kernel_dim = int(np.count_nonzero(np.abs(w) <= ZERO_MODE_REL_TOL * g_norm))

    table = []
    for j in range(len(w)):
        phi_full = t @ phi_red[:, j]
        bst = complex(np.dot(assembly.b_dual, phi_full))
        norm_m = float(np.linalg.norm(v[:, j]))
        stab = abs(bst) > eig_tol * norm_m
        frac = _mechanical_fraction(phi_full, assembly)
        block = "mechanical" if frac >= 0.9 else ("electromagnetic" if frac <= 0.1 else "mixed")
        table.append(ModeRecord(eigenvalue=complex(w[j]), bstar=bst,
                                bstar_abs=abs(bst), norm_m=norm_m,
                                stabilizable=bool(stab), dominant_block=block))

    return SpectrumReport(eigenvalues=w, max_abs_real=float(np.max(np.abs(w.real))),
                          kernel_dimension=kernel_dim, mode_table=table,
                          vectors_reduced=phi_red, g_norm=g_norm, gain=gain)


def compute_spectrum(assembly: GeneratorAssembly, eig_tol: float = 1e-8) -> SpectrumReport:
    """Dense spectrum of the generator on the constrained subspace."""
    if assembly.dim > DENSE_DIM_GUARD:
        raise ValueError(
            f"state dimension {assembly.dim} exceeds the dense eigensolve guard "
            f"({DENSE_DIM_GUARD})")
    r, s = _energy_similarity(assembly)
    return _build_report(assembly, s, r, eig_tol, gain=0.0)


def closed_loop_spectrum(assembly: GeneratorAssembly, gain: float,
                         eig_tol: float = 1e-8) -> SpectrumReport:
    """Spectrum of the collocated-feedback generator G - gain * b (b^T M)."""
    if gain < 0:
        raise ValueError(f"gain must be nonnegative, got {gain}")
    if assembly.dim > DENSE_DIM_GUARD:
        raise ValueError(
            f"state dimension {assembly.dim} exceeds the dense eigensolve guard "
            f"({DENSE_DIM_GUARD})")
    r, s = _energy_similarity(assembly)
    g_vec = r @ assembly.reduction.b_red
    s_cl = s - gain * np.outer(g_vec, g_vec)
    report = _build_report(assembly, s_cl, r, eig_tol, gain=gain)
    if report.eigenvalues.real.max(initial=0.0) > CLOSED_LOOP_REAL_TOL * max(report.g_norm, 1.0):
        raise AssemblyInconsistent(
            f"closed-loop spectrum crossed into the right half plane: "
            f"max Re = {report.eigenvalues.real.max():.3e}")
    return report


def closed_loop_mode_shifts(assembly: GeneratorAssembly, gain: float,
                            max_iter: int = 60, rtol: float = 1e-12):
    """Per-mode closed-loop eigenvalues from the rank-one secular equation.

    Returns (omega, lam, coupling) for the open-loop modes with omega > 0,
    sorted by omega: lam[j] solves 1 + gain * sum_l |c_l|^2/(lam - i w_l) = 0
    near i*omega[j], and coupling[j] = |c_j| is the energy-coordinate feedback
    coupling of the mode.  Accurate for shifts far below the dense-eig noise
    floor; falls back to simple iteration with damping.
    """
    r, s = _energy_similarity(assembly)
    a_skew = 0.5 * (s - s.T)
    theta, u = np.linalg.eigh(1j * a_skew)
    omega_all = -theta  # eigenvalues of the skew part are -i*theta
    g_vec = r @ assembly.reduction.b_red
    c = u.conj().T @ g_vec
    c2 = np.abs(c) ** 2

    pos = np.where(omega_all > 0)[0]
    pos = pos[np.argsort(omega_all[pos])]
    omegas = omega_all[pos]
    lams = np.empty(len(pos), dtype=complex)
    for out_idx, j in enumerate(pos):
        others = np.arange(len(omega_all)) != j
        lam0 = 1j * omega_all[j]
        delta = 0.0 + 0.0j
        for _ in range(max_iter):
            denom_terms = (lam0 + delta) - 1j * omega_all[others]
            corr = 1.0 + gain * np.sum(c2[others] / denom_terms)
            new_delta = -gain * c2[j] / corr
            if abs(new_delta - delta) <= rtol * abs(new_delta) + 1e-300:
                delta = new_delta
                break
            delta = 0.5 * (delta + new_delta)
        lams[out_idx] = lam0 + delta
    return omegas, lams, np.abs(c[pos])


def kernel_basis(assembly: GeneratorAssembly, rel_tol: float = ZERO_MODE_REL_TOL):
    """M-orthonormal basis of the kernel of G on the constrained subspace.

    Returns an array of full-state columns; contains the rigid translation
    (constant y4).  Computed from the singular values of the energy-coordinate
    similarity of G_red.
    """
    r, s = _energy_similarity(assembly)
    u_svd, sing, vt = np.linalg.svd(s)
    scale = sing[0] if len(sing) else 0.0
    null_mask = sing <= rel_tol * scale
    vecs = vt[null_mask].T  # orthonormal in energy coordinates = M-orthonormal
    phi_red = scipy.linalg.solve_triangular(r, vecs)
    return assembly.reduction.t_map @ phi_red


def classify_stabilizability(report: SpectrumReport) -> dict:
    """Summary counts and the per-mode table of a computed spectrum."""
    stab = [rec for rec in report.mode_table if rec.stabilizable]
    non = [rec for rec in report.mode_table if not rec.stabilizable]
    return {
        "mode_table": report.mode_table,
        "n_modes": len(report.mode_table),
        "n_stabilizable": len(stab),
        "n_non_stabilizable": len(non),
        "kernel_dimension": report.kernel_dimension,
    }


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential decay fit of log E(t)."""

    rate: float
    r_squared: float
    n_records: int
    window: tuple


def decay_rate_fit(series, window: tuple) -> DecayFit:
    """Fit log E(t) = c - rate * t over the window (t0, t1).

    Raises :class:`DegenerateWindow` when fewer than 10 records fall inside
    the window or the energy is not strictly positive there.
    """
    t0, t1 = window
    times = np.asarray(series.times)
    energies = series.total_energy()
    mask = (times >= t0) & (times <= t1)
    if np.count_nonzero(mask) < 10:
        raise DegenerateWindow(
            f"window ({t0}, {t1}) contains {np.count_nonzero(mask)} records, need >= 10")
    t = times[mask]
    e = energies[mask]
    if np.any(e <= 0.0):
        raise DegenerateWindow("energy is not strictly positive inside the fit window")
    loge = np.log(e)
    a = np.vstack([np.ones_like(t), t]).T
    coef, *_ = np.linalg.lstsq(a, loge, rcond=None)
    fitted = a @ coef
    ss_res = float(np.sum((loge - fitted) ** 2))
    ss_tot = float(np.sum((loge - loge.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(rate=float(-coef[1]), r_squared=float(r2),
                    n_records=int(len(t)), window=(float(t0), float(t1)))
