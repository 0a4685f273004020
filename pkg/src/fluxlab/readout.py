"""End-to-end erasure-detection readout: driven cavity evolution per qubit
state, Husimi-Q phase-space statistics, projected Gaussians, SNR and
assignment error, and the computational-subspace error probe.

The readout protocol: the resonator is driven at the frequency dressed by
the designated bright (leakage) state, omega_d = omega_r + chi_bright, with
a square envelope and a 20 ns sin^2 ramp-up; the record is truncated at the
first local minimum of the dark-state photon number after the ramp.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaln
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import OptimizeWarning, curve_fit, minimize_scalar

from .constants import TWO_PI
from .dispersive import (
    DriveConfig,
    ResonatorConfig,
    cavity_trajectory,
    chi_dressed,
)
from .dynamics import CollapseOp, Envelope, EvolveConfig, lindblad_evolve, mc_evolve
from .errors import TruncationError
from .hilbert import CircuitParams, diagonalize

__all__ = [
    "ReadoutSystem",
    "QGrid",
    "SignalStats",
    "ReadoutOutcome",
    "simulate_readout",
    "husimi_q",
    "project_and_fit",
    "optimal_projection_angle",
    "snr_and_error",
    "signal_stats",
    "subspace_error_probe",
    "readout_csv",
    "trajectories_csv",
]


@dataclass(frozen=True)
class ReadoutSystem:
    """A fluxonium, its readout resonator, and the erasure-detection roles:
    bright = leakage level whose dressed frequency is driven; computational
    = the two dark levels to be protected.  amplitude follows the published
    angular convention (see dispersive module)."""

    params: CircuitParams
    res: ResonatorConfig
    bright: int
    computational: tuple[int, int]
    amplitude: float
    n_qubit: int = 16
    n_fock_chi: int = 12

    def chis(self) -> dict[int, float]:
        # dispersive shifts need a converged photon ladder even when the
        # readout simulation itself runs with a small Fock space
        res = dataclasses.replace(
            self.res, n_fock=max(self.res.n_fock, self.n_fock_chi)
        )
        spec = diagonalize(self.params, None, n_levels=self.n_qubit)
        return {
            j: chi_dressed(
                self.params, res, j, n_qubit=self.n_qubit, spec=spec
            )
            for j in sorted({self.bright, *self.computational})
        }


@dataclass(frozen=True)
class QGrid:
    """Complex-plane evaluation grid for Husimi functions."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    n: int = 101

    def __post_init__(self):
        if self.re_max <= self.re_min or self.im_max <= self.im_min:
            raise ValueError("grid bounds must be increasing")
        if self.n < 8:
            raise ValueError("grid too coarse")

    def betas(self) -> np.ndarray:
        re = np.linspace(self.re_min, self.re_max, self.n)
        im = np.linspace(self.im_min, self.im_max, self.n)
        return re[None, :] + 1j * im[:, None]

    def cell_area(self) -> float:
        return ((self.re_max - self.re_min) / (self.n - 1)) * (
            (self.im_max - self.im_min) / (self.n - 1)
        )

    @classmethod
    def around(cls, centers, margin_sigma: float = 4.0, n: int = 101) -> "QGrid":
        """Grid enclosing all centers with a margin of margin_sigma
        coherent-state widths (sigma = 1/sqrt(2))."""
        c = np.atleast_1d(np.asarray(centers, dtype=complex))
        m = margin_sigma / math.sqrt(2.0)
        return cls(
            float(c.real.min() - m),
            float(c.real.max() + m),
            float(c.imag.min() - m),
            float(c.imag.max() + m),
            n,
        )


@dataclass
class SignalStats:
    """Projected per-time Gaussian statistics of the two assignment classes
    and the projection angle (radians).  Times in ns."""

    t: np.ndarray
    mu_a: np.ndarray
    mu_b: np.ndarray
    var_a: np.ndarray
    var_b: np.ndarray
    theta: float
    kappa: float


@dataclass
class ReadoutOutcome:
    """Per-state cavity records from one readout simulation."""

    t: np.ndarray
    alphas: dict[int, np.ndarray]
    nbar: dict[int, np.ndarray]
    chis: dict[int, float]
    omega_d: float
    stop_index: int
    mode: str
    rho_res: dict[int, np.ndarray] | None = None
    records: list = field(default_factory=list)

    @property
    def stop_time(self) -> float:
        return float(self.t[self.stop_index])


def _ramp_envelope(ramp: float, horizon: float) -> Envelope:
    # ramp-up only within the simulated horizon: the nominal square pulse
    # is truncated by the stop-time rule long before its own ramp-down
    return Envelope("square_sin2", total=2.0 * horizon + 2 * ramp, amplitude=1.0,
                    ramp=ramp)


def _first_local_min(y: np.ndarray, start: int) -> int:
    for k in range(max(start, 1), len(y) - 1):
        if y[k] <= y[k - 1] and y[k] <= y[k + 1]:
            return k
    return len(y) - 1


def simulate_readout(
    system: ReadoutSystem,
    mode: str = "semiclassical",
    t_max: float = 800.0,
    dt: float = 1.0,
    cfg: EvolveConfig | None = None,
    ramp: float = 20.0,
    n_fock_sim: int | None = None,
) -> ReadoutOutcome:
    """Drive the resonator at the bright-dressed frequency and record the
    per-qubit-state cavity evolution up to the first local minimum of the
    dark-state photon number after the ramp.

    semiclassical mode integrates the coherent amplitude per state; full_mc
    mode runs quantum-jump trajectories of the driven, damped cavity for
    each qubit state with its exact dressed shift (collapse sqrt(kappa) a,
    no qubit collapse), averaging cfg.n_traj trajectories.
    """
    chis = system.chis()
    omega_d = system.res.omega_r + chis[system.bright]
    env = _ramp_envelope(ramp, t_max)
    t = np.arange(0.0, t_max + dt / 2, dt)
    kappa = system.res.kappa
    levels = sorted(chis)

    alphas: dict[int, np.ndarray] = {}
    rho_res: dict[int, np.ndarray] | None = None
    records: list = []

    drive = DriveConfig(amplitude=system.amplitude, omega_d=omega_d, envelope=env)
    for j in levels:
        alphas[j] = cavity_trajectory(
            chis[j], drive, system.res.omega_r, kappa, t
        )

    if mode == "full_mc":
        if cfg is None:
            cfg = EvolveConfig(n_traj=100, seed=1, rtol=1e-8, atol=1e-10)
        nf = n_fock_sim or max(
            24, int(2.2 * max(np.abs(a).max() ** 2 for a in alphas.values())) + 20
        )
        k_idx = np.arange(1, nf)
        a_op = np.zeros((nf, nf))
        a_op[k_idx - 1, k_idx] = np.sqrt(k_idx)
        num = np.diag(np.arange(nf)).astype(complex)
        x_op = (a_op + a_op.T).astype(complex)
        collapse = [CollapseOp.from_rate(kappa, a_op)]
        rho_res = {}
        psi0 = np.zeros(nf, dtype=complex)
        psi0[0] = 1.0
        for j in levels:
            delta = TWO_PI * (system.res.omega_r + chis[j] - omega_d)

            def h_of_t(tt, _d=delta):
                return _d * num + 0.5 * system.amplitude * env(tt) * x_op

            rho_j, recs = mc_evolve(h_of_t, collapse, psi0, t, cfg)
            top = float(np.trace(rho_j[-1][-2:, -2:]).real)
            if top > 1e-6:
                raise TruncationError(
                    f"population {top:.2e} in the top two Fock levels "
                    f"(n_fock={nf}) for qubit level {j}"
                )
            rho_res[j] = rho_j
            records.extend(recs)
    elif mode != "semiclassical":
        raise ValueError(f"unknown mode {mode!r}")

    nbar = {j: np.abs(alphas[j]) ** 2 for j in levels}
    if rho_res is not None:
        nbar = {
            j: np.array(
                [np.trace(r @ np.diag(np.arange(r.shape[0]))).real
                 for r in rho_res[j]]
            )
            for j in levels
        }
    dark = system.computational[0]
    stop = _first_local_min(nbar[dark], start=int(ramp / dt) + 2)

    return ReadoutOutcome(
        t=t,
        alphas=alphas,
        nbar=nbar,
        chis=chis,
        omega_d=omega_d,
        stop_index=stop,
        mode=mode,
        rho_res=rho_res,
        records=records,
    )


def husimi_q(rho_res: np.ndarray, grid: QGrid, edge_tol: float = 1e-3) -> np.ndarray:
    """Husimi function Q(beta) = <beta|rho|beta> on the grid.

    Quadratures are in alpha units: a coherent state |alpha> is centered at
    alpha with projected variance 1/2.  Raises when more than edge_tol of
    the grid-integrated mass sits on the boundary rows/columns (margin
    violation).
    """
    rho = np.asarray(rho_res, dtype=complex)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > 1e-4:
        raise ValueError(f"rho_res trace must be ~1, got {tr}")
    dim = rho.shape[0]
    betas = grid.betas()
    flat = betas.ravel()
    n = np.arange(dim)
    # log-space coherent coefficients: c_n = exp(-|b|^2/2) b*^n / sqrt(n!)
    with np.errstate(divide="ignore"):
        logmag = np.where(
            np.abs(flat)[:, None] > 0,
            n[None, :] * np.log(np.maximum(np.abs(flat)[:, None], 1e-300)),
            np.where(n[None, :] == 0, 0.0, -np.inf),
        )
    logc = logmag - 0.5 * gammaln(n[None, :] + 1) - 0.5 * np.abs(flat)[:, None] ** 2
    phase = np.exp(1j * n[None, :] * np.angle(flat)[:, None])
    c = np.exp(logc) * phase  # <n|beta> rows
    q = np.einsum("bi,ij,bj->b", c.conj(), rho, c).real
    q = q.reshape(betas.shape)
    total = q.sum()
    if total > 0:
        edge = q[0, :].sum() + q[-1, :].sum() + q[:, 0].sum() + q[:, -1].sum()
        if edge / total > edge_tol:
            raise ValueError(
                f"Husimi mass on grid boundary ({edge / total:.2e}) exceeds "
                f"{edge_tol}; enlarge the grid"
            )
    return q


def _gauss(s, amp, mu, var):
    return amp * np.exp(-0.5 * (s - mu) ** 2 / var)


def project_and_fit(q: np.ndarray, grid: QGrid, theta: float):
    """Marginal of Q along the axis at angle theta (Radon transform) plus a
    least-squares Gaussian fit.

    Returns (mu, var, diagnostics) where diagnostics carries the bin
    centers, the marginal, the fit and the maximum absolute residual as a
    fraction of the peak.
    """
    betas = grid.betas()
    re_ax = np.linspace(grid.re_min, grid.re_max, grid.n)
    im_ax = np.linspace(grid.im_min, grid.im_max, grid.n)
    interp = RegularGridInterpolator(
        (im_ax, re_ax), np.asarray(q, dtype=float), method="cubic",
        bounds_error=False, fill_value=0.0,
    )
    # integrate Q along the axis perpendicular to the projection direction
    s_all = (betas * np.exp(-1j * theta)).real
    u_all = (betas * np.exp(-1j * theta)).imag
    centers = np.linspace(s_all.min(), s_all.max(), grid.n)
    u_ax = np.linspace(u_all.min(), u_all.max(), grid.n)
    rot = (centers[None, :] + 1j * u_ax[:, None]) * np.exp(1j * theta)
    samples = interp(
        np.column_stack([rot.imag.ravel(), rot.real.ravel()])
    ).reshape(rot.shape)
    density = np.trapezoid(samples, u_ax, axis=0)

    if density.max() <= 0:
        raise ValueError("empty marginal; nothing to fit")
    w = np.clip(density, 0.0, None)
    mu0 = float((centers * w).sum() / w.sum())
    var0 = max(float(((centers - mu0) ** 2 * w).sum() / w.sum()), 1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        popt, _ = curve_fit(
            _gauss,
            centers,
            density,
            p0=[density.max(), mu0, var0],
            maxfev=20000,
        )
    fit = _gauss(centers, *popt)
    resid = float(np.max(np.abs(density - fit)) / max(density.max(), 1e-300))
    diagnostics = {
        "centers": centers,
        "marginal": density,
        "fit": fit,
        "max_residual_fraction": resid,
    }
    return float(popt[1]), float(abs(popt[2])), diagnostics


def signal_stats(
    outcome: ReadoutOutcome,
    state_a: int,
    state_b: int,
    theta: float,
    grid_n: int = 101,
) -> SignalStats:
    """Projected Gaussian statistics for two qubit states.

    Semiclassical outcomes use the coherent-state fast path (mean = the
    projected amplitude, variance 1/2); full quantum outcomes are projected
    from Husimi functions of the reduced resonator state at each time.
    """
    sel = slice(0, outcome.stop_index + 1)
    t = outcome.t[sel]
    if outcome.rho_res is None:
        mu_a = (outcome.alphas[state_a][sel] * np.exp(-1j * theta)).real
        mu_b = (outcome.alphas[state_b][sel] * np.exp(-1j * theta)).real
        var_a = np.full_like(mu_a, 0.5)
        var_b = np.full_like(mu_b, 0.5)
    else:
        mu_a = np.empty(len(t))
        mu_b = np.empty(len(t))
        var_a = np.empty(len(t))
        var_b = np.empty(len(t))
        centers = np.concatenate(
            [outcome.alphas[state_a][sel], outcome.alphas[state_b][sel]]
        )
        grid = QGrid.around(centers, margin_sigma=5.0, n=grid_n)
        for k in range(len(t)):
            for (state, mu, var) in (
                (state_a, mu_a, var_a),
                (state_b, mu_b, var_b),
            ):
                q = husimi_q(outcome.rho_res[state][sel][k], grid)
                m, v, _ = project_and_fit(q, grid, theta)
                mu[k], var[k] = m, v
    return SignalStats(
        t=t, mu_a=mu_a, mu_b=mu_b, var_a=var_a, var_b=var_b, theta=theta,
        kappa=0.0,
    )


def optimal_projection_angle(stats_for_theta, n_grid: int = 181) -> float:
    """Angle maximizing the weighted contrast integral
    Int w |mu_a - mu_b| dt with w prop |mu_a - mu_b| (so Int (mu_a-mu_b)^2).

    stats_for_theta: callable theta -> SignalStats.  Grid scan over
    [0, pi) followed by local refinement.
    """

    def score(theta: float) -> float:
        st = stats_for_theta(theta)
        d = np.abs(st.mu_a - st.mu_b)
        return float(np.trapezoid(d * d, st.t))

    thetas = np.linspace(0.0, math.pi, n_grid, endpoint=False)
    scores = [score(th) for th in thetas]
    k = int(np.argmax(scores))
    lo = thetas[max(k - 1, 0)]
    hi = thetas[min(k + 1, n_grid - 1)]
    res = minimize_scalar(
        lambda th: -score(th), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-5},
    )
    return float(res.x)


def snr_and_error(stats: SignalStats, tau: float, kappa: float):
    """Signal-to-noise ratio after integration time tau and the resulting
    assignment error erfc(SNR/2):

        SNR = sqrt(kappa) Int w|mu_a-mu_b| dt
              / |Int w var_a dt + Int w var_b dt|^(1/2)

    with w prop |mu_a - mu_b| normalized to Int w^2 dt = tau.
    """
    sel = stats.t <= tau + 1e-12
    t = stats.t[sel]
    if len(t) < 2:
        raise ValueError("tau too short for the sampled statistics")
    d = np.abs(stats.mu_a[sel] - stats.mu_b[sel])
    norm = np.trapezoid(d * d, t)
    if norm <= 0:
        return 0.0, float(erfc(0.0))
    w = d * math.sqrt(tau / norm)
    num = math.sqrt(kappa) * np.trapezoid(w * d, t)
    den = math.sqrt(
        abs(np.trapezoid(w * stats.var_a[sel], t))
        + abs(np.trapezoid(w * stats.var_b[sel], t))
    )
    snr = float(num / den) if den > 0 else 0.0
    return snr, float(erfc(snr / 2.0))


def _cardinal_states() -> list[np.ndarray]:
    s2 = 1.0 / math.sqrt(2.0)
    return [
        np.array([1.0, 0.0], dtype=complex),
        np.array([0.0, 1.0], dtype=complex),
        np.array([s2, s2], dtype=complex),
        np.array([s2, -s2], dtype=complex),
        np.array([s2, 1j * s2], dtype=complex),
        np.array([s2, -1j * s2], dtype=complex),
    ]


def subspace_error_probe(
    system: ReadoutSystem,
    t_list: np.ndarray,
    n_fock: int = 30,
    kappa: float | None = None,
    ramp: float = 20.0,
    cfg: EvolveConfig | None = None,
) -> np.ndarray:
    """Computational-subspace infidelity during readout.

    The qubit is truncated to the two computational (dark) levels, each
    carrying its exact dressed shift; the six cardinal states (tensor
    vacuum) evolve under the driven, damped joint system; the resonator is
    traced out and the subspace fidelity against identity (with virtual-Z
    freedom) is evaluated at each time.  Returns subspace_error(t_list).
    """
    from .gates import gate_fidelity

    chis = system.chis()
    omega_d = system.res.omega_r + chis[system.bright]
    kap = system.res.kappa if kappa is None else kappa
    a_lvl, b_lvl = system.computational
    env = _ramp_envelope(ramp, float(t_list[-1]))

    nf = n_fock
    k = np.arange(1, nf)
    a_op = np.zeros((nf, nf))
    a_op[k - 1, k] = np.sqrt(k)
    num = np.diag(np.arange(nf))
    x_op = a_op + a_op.T
    proj = [np.zeros((2, 2)) for _ in range(2)]
    proj[0][0, 0] = 1.0
    proj[1][1, 1] = 1.0
    d_a = TWO_PI * (system.res.omega_r + chis[a_lvl] - omega_d)
    d_b = TWO_PI * (system.res.omega_r + chis[b_lvl] - omega_d)
    h_qub = np.kron(proj[0], d_a * num) + np.kron(proj[1], d_b * num)

    def h_of_t(t):
        return h_qub + 0.5 * system.amplitude * env(t) * np.kron(
            np.eye(2), x_op
        )

    collapse = (
        [CollapseOp.from_rate(kap, np.kron(np.eye(2), a_op))] if kap > 0 else []
    )
    if cfg is None:
        cfg = EvolveConfig(rtol=1e-9, atol=1e-11)

    vac = np.zeros(nf)
    vac[0] = 1.0
    finals = np.zeros((len(t_list), 6, 2, 2), dtype=complex)
    for i, card in enumerate(_cardinal_states()):
        psi0 = np.kron(card, vac)
        rho0 = np.outer(psi0, psi0.conj())
        rhos = lindblad_evolve(h_of_t, collapse, rho0, t_list, cfg)
        for k_t in range(len(t_list)):
            r = rhos[k_t].reshape(2, nf, 2, nf)
            finals[k_t, i] = np.einsum("injn->ij", r)

    errors = np.empty(len(t_list))
    for k_t in range(len(t_list)):
        fid, _ = gate_fidelity(list(finals[k_t]), np.eye(2, dtype=complex))
        errors[k_t] = 1.0 - fid
    return errors


def readout_csv(
    stats: SignalStats,
    outcome: ReadoutOutcome,
    kappa: float,
    subspace_error: np.ndarray | None = None,
) -> str:
    """Serialize (tau_ns, snr, assignment_error, nbar_bright, nbar_dark,
    subspace_error) rows over the stop-truncated time axis."""
    lines = ["tau_ns,snr,assignment_error,nbar_bright,nbar_dark,subspace_error"]
    sel = slice(0, outcome.stop_index + 1)
    t = outcome.t[sel]
    bright_j = max(
        outcome.nbar, key=lambda j: float(outcome.nbar[j][outcome.stop_index])
    )
    dark_j = min(
        outcome.nbar, key=lambda j: float(outcome.nbar[j][outcome.stop_index])
    )
    for k in range(1, len(t)):
        try:
            snr, err = snr_and_error(stats, t[k], kappa)
        except ValueError:
            snr, err = 0.0, 1.0
        sub = subspace_error[k] if subspace_error is not None else float("nan")
        lines.append(
            f"{t[k]:.6g},{snr:.6g},{err:.6g},"
            f"{outcome.nbar[bright_j][k]:.6g},{outcome.nbar[dark_j][k]:.6g},"
            f"{sub:.6g}"
        )
    return "\n".join(lines) + "\n"


def trajectories_csv(outcome: ReadoutOutcome) -> str:
    """Serialize per-state cavity amplitudes as
    (t_ns, state_label, re_alpha, im_alpha)."""
    lines = ["t_ns,state_label,re_alpha,im_alpha"]
    for j, al in sorted(outcome.alphas.items()):
        for k in range(outcome.stop_index + 1):
            lines.append(
                f"{outcome.t[k]:.6g},{j},{al[k].real:.9g},{al[k].imag:.9g}"
            )
    return "\n".join(lines) + "\n"
