"""Single-fluxonium Hamiltonians, spectra, and the analytic triple-well model.

The circuit Hamiltonian is

    H = 4 E_C n^2 + (1/2) E_L phi^2 - E_J cos(phi + phi_ext)

expressed in the harmonic-oscillator basis of the LC sub-circuit, with
zero-point phase fluctuation phi_zp = (8 E_C / E_L)^(1/4).  All energies in
and out are linear frequencies (GHz, i.e. E/h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .errors import ConvergenceError, TruncationError

__all__ = [
    "CircuitParams",
    "BasisConfig",
    "Spectrum",
    "TripleWellParams",
    "phase_charge_operators",
    "build_hamiltonian",
    "diagonalize",
    "flux_derivatives",
    "triple_well_hamiltonian",
    "triple_well_spectrum",
    "half_integer_reference",
]

# Level labels used throughout: g, e, f, h, i = indices 0..4.
LEVEL_LABELS = ("g", "e", "f", "h", "i")


def _wrap_phase(phi: float) -> float:
    """Map any real angle into [-pi, pi)."""
    return (phi + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class CircuitParams:
    """Fluxonium circuit energies (GHz) and external flux bias (radians).

    phi_ext is normalized into [-pi, pi) on construction; any real value
    may be passed in.
    """

    e_j: float
    e_c: float
    e_l: float
    phi_ext: float = 0.0

    def __post_init__(self):
        for name in ("e_j", "e_c", "e_l"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "phi_ext", _wrap_phase(float(self.phi_ext)))

    @property
    def phi_zp(self) -> float:
        return (8.0 * self.e_c / self.e_l) ** 0.25

    def replace_flux(self, phi_ext: float) -> "CircuitParams":
        return CircuitParams(self.e_j, self.e_c, self.e_l, phi_ext)


@dataclass(frozen=True)
class BasisConfig:
    """Oscillator-basis truncation and convergence target."""

    dim: int = 150
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if self.dim < 20:
            raise ValueError(f"dim must be >= 20, got {self.dim}")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")


@dataclass(frozen=True)
class Spectrum:
    """Diagonalization result: energies referenced to ground plus matrix elements.

    energies are linear frequencies in GHz with energies[0] = 0.
    charge_elems[i, j] = <i|n|j>, phase_elems[i, j] = <i|phi|j>.
    """

    params: CircuitParams
    energies: np.ndarray
    charge_elems: np.ndarray
    phase_elems: np.ndarray
    n_levels: int
    basis: BasisConfig = field(default=BasisConfig(), compare=False)

    def omega(self, i: int, j: int) -> float:
        """Transition frequency E_j - E_i in GHz (positive for j above i)."""
        return float(self.energies[j] - self.energies[i])


def phase_charge_operators(params: CircuitParams, dim: int):
    """Phase and charge operators in the oscillator basis.

    Returns (phi, n) as dense real/imaginary matrices.  phi is real symmetric
    tridiagonal; n is purely imaginary antisymmetric times i, returned complex.
    """
    phi_zp = params.phi_zp
    k = np.arange(1, dim)
    off = np.sqrt(k / 2.0)
    phi = np.zeros((dim, dim))
    phi[k - 1, k] = phi_zp * off
    phi[k, k - 1] = phi_zp * off
    # n = i (a^dag - a) / (sqrt(2) phi_zp)
    n = np.zeros((dim, dim), dtype=complex)
    n[k, k - 1] = 1j * off / phi_zp
    n[k - 1, k] = -1j * off / phi_zp
    return phi, n


def build_hamiltonian(params: CircuitParams, basis: BasisConfig) -> np.ndarray:
    """Circuit Hamiltonian matrix in the oscillator basis, in GHz.

    The cosine is evaluated exactly on the truncated basis by diagonalizing
    the (tridiagonal) phase operator and transforming cos back.
    """
    dim = basis.dim
    phi_zp = params.phi_zp
    k = np.arange(1, dim)
    off = phi_zp * np.sqrt(k / 2.0)

    # Eigen-decompose phi (tridiagonal, zero diagonal).
    phi_vals, phi_vecs = eigh_tridiagonal(np.zeros(dim), off)
    cos_op = (phi_vecs * np.cos(phi_vals + params.phi_ext)) @ phi_vecs.T

    # Harmonic part: 4 E_C n^2 + (1/2) E_L phi^2 = sqrt(8 E_C E_L) (a^dag a + 1/2)
    # plus the anharmonic counter-terms vanish in this exact LC basis.
    omega0 = math.sqrt(8.0 * params.e_c * params.e_l)
    h = np.diag(omega0 * (np.arange(dim) + 0.5))
    h -= params.e_j * cos_op
    # symmetrize against roundoff
    return 0.5 * (h + h.T)


def _diagonalize_once(params: CircuitParams, dim: int, n_levels: int):
    basis = BasisConfig(dim=dim)
    h = build_hamiltonian(params, basis)
    evals, evecs = eigh(h)
    vecs = evecs[:, :n_levels]
    # Gauge fix: largest-magnitude component real positive.
    for k in range(n_levels):
        idx = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[idx, k] < 0:
            vecs[:, k] = -vecs[:, k]
    return evals[:n_levels], vecs


def diagonalize(
    params: CircuitParams,
    basis: BasisConfig | None = None,
    n_levels: int = 5,
) -> Spectrum:
    """Diagonalize the circuit, returning a converged Spectrum.

    The basis dimension is doubled until the retained eigenenergies move by
    less than basis.convergence_tol (relative to the overall energy scale).
    """
    if basis is None:
        basis = BasisConfig()
    if n_levels > basis.dim // 3:
        raise TruncationError(
            f"n_levels={n_levels} exceeds dim/3={basis.dim // 3}; increase dim"
        )

    dim = basis.dim
    evals, vecs = _diagonalize_once(params, dim, n_levels)
    scale = max(abs(evals[-1] - evals[0]), 1.0)
    max_dim = max(1600, 8 * basis.dim)
    residual = math.inf
    while True:
        evals2, vecs2 = _diagonalize_once(params, 2 * dim, n_levels)
        residual = float(np.max(np.abs(evals2 - evals)) / scale)
        if residual < basis.convergence_tol:
            dim *= 2
            evals, vecs = evals2, vecs2
            break
        dim *= 2
        evals, vecs = evals2, vecs2
        if dim > max_dim:
            raise ConvergenceError(
                f"energies not converged at dim={dim} "
                f"(relative residual {residual:.3e})",
                residual=residual,
            )

    phi_op, n_op = phase_charge_operators(params, dim)
    phase_elems = vecs.T @ phi_op @ vecs
    charge_elems = vecs.conj().T @ n_op @ vecs
    phase_elems = phase_elems.astype(complex)
    # enforce exact Hermiticity against roundoff
    phase_elems = 0.5 * (phase_elems + phase_elems.conj().T)
    charge_elems = 0.5 * (charge_elems + charge_elems.conj().T)

    energies = np.asarray(evals) - evals[0]
    return Spectrum(
        params=params,
        energies=energies,
        charge_elems=charge_elems,
        phase_elems=phase_elems,
        n_levels=n_levels,
        basis=BasisConfig(dim=dim, convergence_tol=basis.convergence_tol),
    )


def flux_derivatives(
    params: CircuitParams,
    basis: BasisConfig | None,
    i: int,
    j: int,
    order: int,
    step: float = 1e-4,
) -> float:
    """Derivative of the transition frequency omega_ij with respect to
    external flux in Phi_0 units (GHz per Phi_0^order).

    Central finite differences with one Richardson refinement
    (4 D_{h/2} - D_h)/3.
    """
    if i == j:
        raise ValueError("need two distinct levels")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")

    n_levels = max(i, j) + 1

    def omega_at(lam: float) -> float:
        p = params.replace_flux(params.phi_ext + 2.0 * math.pi * lam)
        spec = diagonalize(p, basis, n_levels=n_levels)
        return spec.omega(i, j)

    def stencil(h: float) -> float:
        if order == 1:
            return (omega_at(h) - omega_at(-h)) / (2.0 * h)
        return (omega_at(h) - 2.0 * omega_at(0.0) + omega_at(-h)) / (h * h)

    d_h = stencil(step)
    d_h2 = stencil(step / 2.0)
    return (4.0 * d_h2 - d_h) / 3.0


# ---------------------------------------------------------------------------
# Triple-well model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TripleWellParams:
    """Effective three-well parameters: single-well tunneling eps1,
    next-nearest (double-well) tunneling eps2, inductive energy e_l (GHz)."""

    eps1: float
    eps2: float
    e_l: float

    def __post_init__(self):
        if self.eps1 <= 0:
            raise ValueError("eps1 must be positive")
        if self.eps2 < 0:
            raise ValueError("eps2 must be nonnegative")
        if self.e_l <= 0:
            raise ValueError("e_l must be positive")

    @property
    def alpha(self) -> float:
        return self.eps1 / (4.0 * math.pi * self.e_l)


def triple_well_hamiltonian(tw: TripleWellParams, phi_ext: float = 0.0) -> np.ndarray:
    """3x3 Hamiltonian in the well basis (m = -1, 0, +1), GHz.

    Diagonal: (E_L/2)(2 pi m - phi_ext)^2; nearest-neighbor coupling
    -eps1/2; outer-well coupling -eps2/2.
    """
    diag = [
        0.5 * tw.e_l * (2.0 * math.pi * m - phi_ext) ** 2 for m in (-1, 0, 1)
    ]
    h = np.diag(diag)
    h[0, 1] = h[1, 0] = h[1, 2] = h[2, 1] = -tw.eps1 / 2.0
    h[0, 2] = h[2, 0] = -tw.eps2 / 2.0
    return h


@dataclass(frozen=True)
class TripleWellSummary:
    """Exact 3x3 eigenvalues plus the perturbative small-eps predictions."""

    energies: np.ndarray
    omega_ge_perturbative: float
    omega_ef_perturbative: float
    phase_elem_ef: float
    charge_elem_ef: float | None


def triple_well_spectrum(
    tw: TripleWellParams, phi_ext: float = 0.0, e_c: float | None = None
) -> TripleWellSummary:
    """Exact eigenvalues of the 3x3 model and the leading-order analytics.

    Perturbative formulas (valid for eps1, eps2 << E_L):
        omega_ge ~ 2 pi^2 E_L - eps2/2 + eps1^2/(4 pi^2 E_L)
        omega_ef ~ eps2 + eps1^2/(4 pi^2 E_L)
        <e|phi|f> ~ 2 pi
        <e|n|f>   ~ (2 pi / 8 E_C)(alpha eps1 + eps2)   [needs e_c]
    """
    h = triple_well_hamiltonian(tw, phi_ext)
    evals = np.linalg.eigvalsh(h)

    el_eff = 2.0 * math.pi**2 * tw.e_l
    corr = tw.eps1**2 / (4.0 * math.pi**2 * tw.e_l)
    omega_ge = el_eff - tw.eps2 / 2.0 + corr
    omega_ef = tw.eps2 + corr

    charge = None
    if e_c is not None:
        charge = (2.0 * math.pi / (8.0 * e_c)) * (tw.alpha * tw.eps1 + tw.eps2)

    return TripleWellSummary(
        energies=evals,
        omega_ge_perturbative=omega_ge,
        omega_ef_perturbative=omega_ef,
        phase_elem_ef=2.0 * math.pi,
        charge_elem_ef=charge,
    )


def triple_well_curvature(tw: TripleWellParams) -> float:
    """Analytic second derivative of omega_ef with respect to external flux
    in Phi_0 units: 16 pi^2 E_L^2 / (eps2 + alpha eps1), GHz/Phi_0^2."""
    return 16.0 * math.pi**2 * tw.e_l**2 / (tw.eps2 + tw.alpha * tw.eps1)


def half_integer_reference(eps1: float, e_l: float, delta: float = 0.0):
    """Two-well model at half-integer bias: qubit splitting and curvature.

    Splitting sqrt(eps1^2 + (2 pi E_L delta)^2) for flux offset delta (Phi_0);
    curvature at delta=0 is 4 pi^2 E_L^2 / eps1 (GHz/Phi_0^2).
    """
    splitting = math.hypot(eps1, 2.0 * math.pi * e_l * delta)
    curvature = (2.0 * math.pi * e_l) ** 2 / eps1
    return splitting, curvature
