"""Time-evolution engines and the drive-envelope library.

All Hamiltonians passed to the evolvers are in angular units (rad/ns);
drive carriers in DriveTerm are linear frequencies (GHz) and are converted
internally via the 2 pi factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp, quad
from scipy.interpolate import CubicSpline

from .constants import TWO_PI
from .errors import IntegrationError

__all__ = [
    "Envelope",
    "DriveTerm",
    "CollapseOp",
    "EvolveConfig",
    "envelope_eval",
    "propagate_unitary",
    "lindblad_evolve",
    "mc_evolve",
]

# Commutator-free 4th-order Magnus weights (Gauss-Legendre nodes).
_CF4_A1 = (3.0 - 2.0 * math.sqrt(3.0)) / 12.0
_CF4_A2 = (3.0 + 2.0 * math.sqrt(3.0)) / 12.0
_GAUSS_C1 = 0.5 - math.sqrt(3.0) / 6.0
_GAUSS_C2 = 0.5 + math.sqrt(3.0) / 6.0


@dataclass(frozen=True)
class Envelope:
    """Drive amplitude profile A(t), nonzero on [0, total].

    variants:
      - "square_sin2": flat top with symmetric sin^2 ramp-up/down of
        duration ramp (ramp <= total/2)
      - "raised_cosine": (1 - cos(2 pi t / total)) / 2
      - "smooth_ansatz": complex amplitudes at equally spaced interior
        knots, zero-clamped at both ends, cubic-spline interpolated
    amplitude is the overall scale in GHz.
    """

    variant: str
    total: float
    amplitude: float = 1.0
    ramp: float = 0.0
    knots: tuple = ()

    def __post_init__(self):
        if self.total <= 0:
            raise ValueError("envelope duration must be positive")
        if self.variant == "square_sin2":
            if not 0 <= self.ramp <= self.total / 2:
                raise ValueError("ramp must lie in [0, total/2]")
        elif self.variant == "raised_cosine":
            pass
        elif self.variant == "smooth_ansatz":
            if len(self.knots) < 1:
                raise ValueError("smooth_ansatz needs at least one knot")
        else:
            raise ValueError(f"unknown envelope variant {self.variant!r}")

    def _spline(self) -> CubicSpline:
        k = np.concatenate(([0.0], np.asarray(self.knots, dtype=complex), [0.0]))
        t = np.linspace(0.0, self.total, len(k))
        return CubicSpline(t, k, bc_type="clamped")

    def __call__(self, t):
        """Complex amplitude at time t (GHz); 0 outside [0, total]."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.total)
        if self.variant == "square_sin2":
            out = np.ones_like(t)
            if self.ramp > 0:
                up = t < self.ramp
                down = t > self.total - self.ramp
                out = np.where(up, np.sin(0.5 * np.pi * t / self.ramp) ** 2, out)
                out = np.where(
                    down, np.sin(0.5 * np.pi * (self.total - t) / self.ramp) ** 2, out
                )
        elif self.variant == "raised_cosine":
            out = 0.5 * (1.0 - np.cos(TWO_PI * t / self.total))
        else:
            out = self._spline()(np.clip(t, 0.0, self.total))
        res = self.amplitude * out * inside
        if np.iscomplexobj(res):
            return res if res.ndim else complex(res)
        return res if res.ndim else float(res)


@dataclass
class DriveTerm:
    """One drive: operator * Re[A(t) exp(i(2 pi carrier t + theta_det(t) + phase))].

    detuning_schedule, if given, is (t_grid, delta_ghz) samples of a
    time-dependent detuning delta(t); its cumulative phase
    theta_det(t) = 2 pi Int_0^t delta dt' is precomputed on the grid and
    spline-interpolated.
    """

    operator: np.ndarray
    envelope: Envelope
    carrier: float
    phase: float = 0.0
    detuning_schedule: tuple[np.ndarray, np.ndarray] | None = None
    _theta: CubicSpline | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.carrier < 0:
            raise ValueError("carrier frequency must be nonnegative")
        if self.detuning_schedule is not None:
            tg, dg = (np.asarray(a, dtype=float) for a in self.detuning_schedule)
            spline = CubicSpline(tg, TWO_PI * dg)
            self._theta = spline.antiderivative()

    def theta_det(self, t):
        if self._theta is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self._theta(t) - self._theta(0.0)


def envelope_eval(drive: DriveTerm, t) -> float | np.ndarray:
    """Real drive coefficient epsilon(t) in GHz."""
    a = drive.envelope(t)
    ph = TWO_PI * drive.carrier * np.asarray(t, dtype=float) + drive.phase
    ph = ph + drive.theta_det(t)
    out = np.real(a * np.exp(1j * ph))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CollapseOp:
    """Jump operator with the rate already folded in: L = sqrt(Gamma) * jump."""

    operator: np.ndarray

    @classmethod
    def from_rate(cls, rate: float, jump: np.ndarray) -> "CollapseOp":
        if rate < 0:
            raise ValueError("rate must be nonnegative")
        return cls(operator=math.sqrt(rate) * np.asarray(jump, dtype=complex))


@dataclass(frozen=True)
class EvolveConfig:
    """Integration tolerances, step hint and Monte-Carlo controls."""

    rtol: float = 1e-8
    atol: float = 1e-10
    dt_hint: float | None = None
    n_traj: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")


HamiltonianBuilder = Callable[[float], np.ndarray]


def _expm_herm(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i h dt) for Hermitian h via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * dt * w)) @ v.conj().T


def propagate_unitary(
    h_of_t: HamiltonianBuilder,
    t_final: float,
    cfg: EvolveConfig | None = None,
    method: str = "adaptive",
    t_start: float = 0.0,
) -> np.ndarray:
    """Time-ordered propagator U solving i dU/dt = H(t) U, U(t_start) = I.

    method "adaptive" integrates with dense error control; "cf4" uses a
    fixed-step commutator-free 4th-order Magnus scheme (two Hermitian
    exponentials per step, step from cfg.dt_hint).
    """
    if cfg is None:
        cfg = EvolveConfig()
    h0 = np.asarray(h_of_t(t_start), dtype=complex)
    dim = h0.shape[0]
    ident = np.eye(dim, dtype=complex)
    if t_final == t_start:
        return ident

    if method == "cf4":
        dt = cfg.dt_hint or (t_final - t_start) / 1000.0
        n_steps = max(1, int(round((t_final - t_start) / dt)))
        dt = (t_final - t_start) / n_steps
        u = ident
        t = t_start
        for _ in range(n_steps):
            h1 = np.asarray(h_of_t(t + _GAUSS_C1 * dt), dtype=complex)
            h2 = np.asarray(h_of_t(t + _GAUSS_C2 * dt), dtype=complex)
            u = _expm_herm(_CF4_A1 * h1 + _CF4_A2 * h2, dt) @ (
                _expm_herm(_CF4_A2 * h1 + _CF4_A1 * h2, dt) @ u
            )
            t += dt
        return u

    def rhs(t, y):
        u = y.view(complex).reshape(dim, dim)
        return (-1j * (h_of_t(t) @ u)).ravel().view(float)

    sol = solve_ivp(
        rhs,
        (t_start, t_final),
        ident.ravel().view(float).copy(),
        rtol=cfg.rtol,
        atol=cfg.atol,
        method="DOP853",
    )
    if not sol.success:
        raise IntegrationError(
            f"propagator integration failed: {sol.message}", achieved_tol=None
        )
    return sol.y[:, -1].view(complex).reshape(dim, dim)


def _lindblad_rhs_factory(h_of_t, collapse: Sequence[CollapseOp], dim: int):
    ls = [np.asarray(c.operator, dtype=complex) for c in collapse]
    ldl = sum(
        (l.conj().T @ l for l in ls), start=np.zeros((dim, dim), dtype=complex)
    )

    def rhs(t, y):
        rho = y.view(complex).reshape(dim, dim)
        h = h_of_t(t)
        drho = -1j * (h @ rho - rho @ h)
        drho -= 0.5 * (ldl @ rho + rho @ ldl)
        for l in ls:
            drho += l @ rho @ l.conj().T
        return drho.ravel().view(float)

    return rhs


def lindblad_evolve(
    h_of_t: HamiltonianBuilder,
    collapse: Sequence[CollapseOp],
    rho0: np.ndarray,
    t_list: np.ndarray,
    cfg: EvolveConfig | None = None,
) -> np.ndarray:
    """Density matrices at t_list under the Lindblad master equation."""
    if cfg is None:
        cfg = EvolveConfig()
    rho0 = np.asarray(rho0, dtype=complex)
    dim = rho0.shape[0]
    tr = float(np.trace(rho0).real)
    if abs(tr - 1.0) > 1e-6:
        raise ValueError(f"rho0 trace must be 1, got {tr}")
    t_list = np.asarray(t_list, dtype=float)
    if len(t_list) == 0 or float(t_list[-1]) == float(t_list[0]):
        return np.broadcast_to(rho0, (len(t_list), dim, dim)).copy()
    rhs = _lindblad_rhs_factory(h_of_t, collapse, dim)
    sol = solve_ivp(
        rhs,
        (float(t_list[0]), float(t_list[-1])),
        rho0.ravel().view(float).copy(),
        t_eval=t_list,
        rtol=cfg.rtol,
        atol=cfg.atol,
        method="DOP853",
    )
    if not sol.success:
        raise IntegrationError(f"Lindblad integration failed: {sol.message}")
    rhos = sol.y.T.copy().view(complex).reshape(len(t_list), dim, dim)
    return rhos


@dataclass
class TrajectoryRecord:
    """Jump log of one quantum trajectory."""

    index: int
    jump_times: list[float]
    jump_channels: list[int]


def _mc_single(
    h_of_t,
    ls: list[np.ndarray],
    ldl: np.ndarray,
    psi0: np.ndarray,
    t_list: np.ndarray,
    rng: np.random.Generator,
    cfg: EvolveConfig,
):
    """One quantum-jump trajectory; returns (states at t_list, record)."""
    dim = psi0.shape[0]

    def rhs(t, y):
        psi = y.view(complex)
        h = h_of_t(t)
        return (-1j * (h @ psi) - 0.5 * (ldl @ psi)).ravel().view(float)

    jumps_t: list[float] = []
    jumps_c: list[int] = []
    out = np.empty((len(t_list), dim), dtype=complex)
    psi = psi0.astype(complex)
    t = float(t_list[0])
    out_idx = 0
    if t_list[0] == t:
        out[0] = psi
        out_idx = 1
    t_end = float(t_list[-1])
    threshold = rng.random()

    while t < t_end:
        def event(tt, y, thr=threshold):
            n2 = np.sum(np.abs(y.view(complex)) ** 2)
            return n2 - thr

        event.terminal = True
        event.direction = -1
        t_eval = t_list[(t_list > t) & (t_list <= t_end)]
        sol = solve_ivp(
            rhs,
            (t, t_end),
            psi.ravel().view(float).copy(),
            t_eval=t_eval if len(t_eval) else None,
            events=event,
            rtol=cfg.rtol,
            atol=cfg.atol,
            method="DOP853",
            dense_output=True,
        )
        if not sol.success:
            raise IntegrationError(f"trajectory integration failed: {sol.message}")
        jumped = sol.t_events[0].size > 0
        t_stop = float(sol.t_events[0][0]) if jumped else t_end
        # record requested output times reached in this segment
        while out_idx < len(t_list) and t_list[out_idx] <= t_stop:
            psi_t = sol.sol(t_list[out_idx]).view(complex)
            norm = np.linalg.norm(psi_t)
            out[out_idx] = psi_t / norm if norm > 0 else psi_t
            out_idx += 1
        if not jumped:
            break
        psi_j = sol.sol(t_stop).view(complex)
        weights = np.array([np.linalg.norm(l @ psi_j) ** 2 for l in ls])
        total = weights.sum()
        if total <= 0:
            break
        ch = int(rng.choice(len(ls), p=weights / total))
        psi = ls[ch] @ psi_j
        psi /= np.linalg.norm(psi)
        jumps_t.append(t_stop)
        jumps_c.append(ch)
        t = t_stop
        threshold = rng.random()

    return out, TrajectoryRecord(index=-1, jump_times=jumps_t, jump_channels=jumps_c)


def mc_evolve(
    h_of_t: HamiltonianBuilder,
    collapse: Sequence[CollapseOp],
    psi0: np.ndarray,
    t_list: np.ndarray,
    cfg: EvolveConfig,
):
    """Monte-Carlo quantum-jump unravelling.

    Trajectory k draws from default_rng(cfg.seed + k), so results are
    reproducible and independent of execution order; the averaged density
    matrix is accumulated in trajectory-index order.

    Returns (rho_avg(t_list), records).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    nrm = np.linalg.norm(psi0)
    if abs(nrm - 1.0) > 1e-9:
        raise ValueError(f"psi0 must be normalized, |psi0| = {nrm}")
    t_list = np.asarray(t_list, dtype=float)
    dim = psi0.shape[0]
    ls = [np.asarray(c.operator, dtype=complex) for c in collapse]
    ldl = sum(
        (l.conj().T @ l for l in ls), start=np.zeros((dim, dim), dtype=complex)
    )

    rho = np.zeros((len(t_list), dim, dim), dtype=complex)
    records = []
    for k in range(cfg.n_traj):
        rng = np.random.default_rng(cfg.seed + k)
        states, rec = _mc_single(h_of_t, ls, ldl, psi0, t_list, rng, cfg)
        rec.index = k
        records.append(rec)
        rho += np.einsum("ti,tj->tij", states, states.conj())
    rho /= cfg.n_traj
    return rho, records


def jump_log_csv(records: Sequence[TrajectoryRecord]) -> str:
    """Serialize trajectory jump logs as (trajectory_id, t_jump, channel_index)."""
    lines = ["trajectory_id,t_jump,channel_index"]
    for rec in records:
        for t, c in zip(rec.jump_times, rec.jump_channels):
            lines.append(f"{rec.index},{t:.9g},{c}")
    return "\n".join(lines) + "\n"
