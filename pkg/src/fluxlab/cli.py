"""Batch command-line front end.

Subcommands wrap one workflow each and write deterministic result files:

    fluxlab <spectrum|coherence|chi|readout|gate|cz> \
        --config <file.json> --out <dir> [--seed N]

Configs are JSON with explicit-unit key names (e.g. ``e_j_ghz``); unknown
keys are rejected with a field-path message.  Every output file carries a
header block (CSV comment lines / JSON ``meta`` object) with the SHA-256
hash of the effective config and the seed, and reruns with an equal config
hash are byte-identical.

Exit codes: 0 success, 2 config error, 3 physics error, 4 budget exhausted.
The ``FLUXLAB_THREADS`` environment variable caps BLAS/OpenMP worker
threads.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .dispersive import ResonatorConfig, chi_scan_csv, g_from_published
from .dynamics import EvolveConfig
from .errors import BudgetExhausted, FluxlabError
from .gates import (
    CoupledSystem,
    coupling_from_published,
    cz_envelope,
    simulate_cz_gate,
    simulate_ef_x_gate,
    simulate_raman_x_gate,
)
from .hilbert import BasisConfig, CircuitParams, diagonalize, flux_derivatives
from .noise import NoiseModel, coherence_sweep, rate_table
from .readout import (
    ReadoutSystem,
    optimal_projection_angle,
    readout_csv,
    signal_stats,
    simulate_readout,
    snr_and_error,
    subspace_error_probe,
    trajectories_csv,
)

__all__ = ["main", "ConfigError"]


class ConfigError(Exception):
    """Config validation failure; message carries the field path."""


# ---------------------------------------------------------------------------
# schema validation

_MISSING = object()


def _want(cfg: dict, key: str, path: str, default=_MISSING):
    if key not in cfg:
        if default is not _MISSING:
            return default
        raise ConfigError(f"{path}{key}: required key missing")
    return cfg[key]


def _number(val, path: str, positive=False, nonnegative=False) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {val!r}")
    v = float(val)
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be > 0, got {v}")
    if nonnegative and v < 0:
        raise ConfigError(f"{path}: must be >= 0, got {v}")
    return v


def _integer(val, path: str, minimum: int | None = None) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}: expected an integer, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {val}")
    return val


def _choice(val, path: str, options: tuple) -> str:
    if val not in options:
        raise ConfigError(f"{path}: expected one of {options}, got {val!r}")
    return val


def _block(cfg, path: str) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected an object")
    return cfg


def _reject_unknown(cfg: dict, known: set, path: str) -> None:
    extra = sorted(set(cfg) - known)
    if extra:
        raise ConfigError(f"{path}{extra[0]}: unknown key")


def _circuit(cfg: dict, path: str) -> CircuitParams:
    blk = _block(cfg, path)
    _reject_unknown(blk, {"e_j_ghz", "e_c_ghz", "e_l_ghz", "phi_ext_rad"},
                    path + ".")
    return CircuitParams(
        e_j=_number(_want(blk, "e_j_ghz", path + "."), path + ".e_j_ghz",
                    positive=True),
        e_c=_number(_want(blk, "e_c_ghz", path + "."), path + ".e_c_ghz",
                    positive=True),
        e_l=_number(_want(blk, "e_l_ghz", path + "."), path + ".e_l_ghz",
                    positive=True),
        phi_ext=_number(_want(blk, "phi_ext_rad", path + ".", 0.0),
                        path + ".phi_ext_rad"),
    )


def _noise(cfg: dict, path: str) -> NoiseModel:
    blk = _block(cfg, path)
    _reject_unknown(
        blk, {"q_cap", "a_flux_phi0", "temperature_k", "eta"}, path + ".")
    return NoiseModel(
        q_cap=_number(_want(blk, "q_cap", path + ".", 1e5), path + ".q_cap",
                      positive=True),
        a_flux=_number(_want(blk, "a_flux_phi0", path + ".", 1e-6),
                       path + ".a_flux_phi0", nonnegative=True),
        temperature=_number(_want(blk, "temperature_k", path + ".", 0.02),
                            path + ".temperature_k", positive=True),
        eta=_number(_want(blk, "eta", path + ".", 1.0), path + ".eta",
                    positive=True),
    )


# ---------------------------------------------------------------------------
# output plumbing


def _config_hash(cfg: dict, seed: int) -> str:
    canonical = json.dumps({"config": cfg, "seed": seed}, sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _csv_header(command: str, cfg_hash: str, seed: int) -> str:
    return (f"# fluxlab {command}\n"
            f"# config_sha256: {cfg_hash}\n"
            f"# seed: {seed}\n")


def _write_csv(out: Path, name: str, command: str, cfg_hash: str, seed: int,
               body: str) -> None:
    (out / name).write_text(_csv_header(command, cfg_hash, seed) + body)


def _write_json(out: Path, name: str, command: str, cfg_hash: str, seed: int,
                payload: dict) -> None:
    payload = dict(payload)
    payload["meta"] = {
        "command": f"fluxlab {command}",
        "config_sha256": cfg_hash,
        "seed": seed,
    }
    (out / name).write_text(json.dumps(payload, indent=2, sort_keys=True)
                            + "\n")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.9g}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(cfg: dict, out: Path, seed: int, cfg_hash: str) -> None:
    _reject_unknown(cfg, {"circuit", "levels", "n_levels", "seed"}, "")
    params = _circuit(_want(cfg, "circuit", ""), "circuit")
    levels = _want(cfg, "levels", "", [0, 1, 2])
    if not isinstance(levels, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 0
        for v in levels
    ):
        raise ConfigError("levels: expected a list of level indices >= 0")
    n_levels = _integer(_want(cfg, "n_levels", "",
                              max(levels, default=4) + 2), "n_levels",
                        minimum=2)
    if levels and max(levels) >= n_levels:
        raise ConfigError("levels: entries must be below n_levels")

    spec = diagonalize(params, n_levels=n_levels)
    _write_json(out, "spectrum.json", "spectrum", cfg_hash, seed, {
        "energies_ghz": [float(e) for e in spec.energies],
        "omega_ge_ghz": spec.omega(0, 1),
        "omega_ef_ghz": spec.omega(1, 2),
        "n_levels": n_levels,
    })

    lines = ["i,j,omega_ghz,n_abs,phi_abs,domega_dphi,d2omega_dphi2"]
    basis = BasisConfig()
    for a in sorted(set(levels)):
        for b in sorted(set(levels)):
            if b <= a:
                continue
            d1 = flux_derivatives(params, basis, a, b, 1)
            d2 = flux_derivatives(params, basis, a, b, 2)
            lines.append(
                f"{a},{b},{_fmt(spec.omega(a, b))},"
                f"{_fmt(abs(spec.charge_elems[a, b]))},"
                f"{_fmt(abs(spec.phase_elems[a, b]))},"
                f"{_fmt(d1)},{_fmt(d2)}"
            )
    _write_csv(out, "matrix_elements.csv", "spectrum", cfg_hash, seed,
               "\n".join(lines) + "\n")


def cmd_coherence(cfg: dict, out: Path, seed: int, cfg_hash: str) -> None:
    _reject_unknown(cfg, {"circuit", "noise", "n_levels", "sweep", "seed"},
                    "")
    params = _circuit(_want(cfg, "circuit", ""), "circuit")
    nm = _noise(_want(cfg, "noise", "", {}), "noise")
    n_levels = _integer(_want(cfg, "n_levels", "", 7), "n_levels", minimum=2)

    table = rate_table(params, nm, n_levels=n_levels)
    _write_csv(out, "rates.csv", "coherence", cfg_hash, seed, table.to_csv())

    lines = None
    if "sweep" in cfg:
        blk = _block(cfg["sweep"], "sweep")
        _reject_unknown(blk, {"vary", "grid_ghz", "pair"}, "sweep.")
        vary = _choice(_want(blk, "vary", "sweep."), "sweep.vary",
                       ("e_c_ghz", "e_l_ghz"))
        grid = _want(blk, "grid_ghz", "sweep.")
        if not isinstance(grid, list) or not grid:
            raise ConfigError("sweep.grid_ghz: expected a non-empty list")
        grid = [
            _number(v, "sweep.grid_ghz[]", positive=True) for v in grid
        ]
        pair = _want(blk, "pair", "sweep.", [1, 2])
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, int) for v in pair)):
            raise ConfigError("sweep.pair: expected two level indices")
        res = coherence_sweep(params, nm, vary[:-4], np.asarray(grid),
                              pair=tuple(pair))
        keys = list(res)
        lines = [",".join(keys)]
        for k in range(len(grid)):
            lines.append(",".join(_fmt(float(res[key][k])) for key in keys))
    else:
        lines = ["vary,omega_ghz,t1_ns,tphi_ns,t2_ns"]
    _write_csv(out, "sweep.csv", "coherence", cfg_hash, seed,
               "\n".join(lines) + "\n")


def cmd_chi(cfg: dict, out: Path, seed: int, cfg_hash: str) -> None:
    _reject_unknown(
        cfg, {"circuit", "band_ghz", "g_published_ghz", "levels", "n_points",
              "seed"}, "")
    params = _circuit(_want(cfg, "circuit", ""), "circuit")
    band = _want(cfg, "band_ghz", "")
    if (not isinstance(band, list) or len(band) != 2
            or band[0] >= band[1]):
        raise ConfigError("band_ghz: expected [low, high] with low < high")
    band = (_number(band[0], "band_ghz[0]", positive=True),
            _number(band[1], "band_ghz[1]", positive=True))
    g = g_from_published(_number(_want(cfg, "g_published_ghz", ""),
                                 "g_published_ghz", positive=True))
    levels = tuple(_want(cfg, "levels", "", [0, 1, 2]))
    n_points = _integer(_want(cfg, "n_points", "", 101), "n_points",
                        minimum=2)
    body = chi_scan_csv(params, band, g, levels=levels, n_points=n_points)
    _write_csv(out, "chi_scan.csv", "chi", cfg_hash, seed, body)


def cmd_readout(cfg: dict, out: Path, seed: int, cfg_hash: str) -> None:
    _reject_unknown(
        cfg,
        {"circuit", "resonator", "bright_level", "computational_levels",
         "amplitude_ghz", "mode", "t_max_ns", "dt_ns", "trajectories",
         "subspace_probe", "seed"},
        "",
    )
    params = _circuit(_want(cfg, "circuit", ""), "circuit")
    rblk = _block(_want(cfg, "resonator", ""), "resonator")
    _reject_unknown(rblk, {"omega_r_ghz", "g_published_ghz", "kappa_per_ns"},
                    "resonator.")
    res = ResonatorConfig(
        omega_r=_number(_want(rblk, "omega_r_ghz", "resonator."),
                        "resonator.omega_r_ghz", positive=True),
        g=g_from_published(
            _number(_want(rblk, "g_published_ghz", "resonator."),
                    "resonator.g_published_ghz", positive=True)),
        kappa=_number(_want(rblk, "kappa_per_ns", "resonator."),
                      "resonator.kappa_per_ns", nonnegative=True),
    )
    comp = _want(cfg, "computational_levels", "")
    if (not isinstance(comp, list) or len(comp) != 2
            or not all(isinstance(v, int) for v in comp)):
        raise ConfigError(
            "computational_levels: expected two level indices")
    system = ReadoutSystem(
        params=params,
        res=res,
        bright=_integer(_want(cfg, "bright_level", ""), "bright_level",
                        minimum=0),
        computational=tuple(comp),
        amplitude=_number(_want(cfg, "amplitude_ghz", ""), "amplitude_ghz",
                          nonnegative=True),
    )
    mode = _choice(_want(cfg, "mode", "", "semiclassical"), "mode",
                   ("semiclassical", "full_mc"))
    t_max = _number(_want(cfg, "t_max_ns", "", 800.0), "t_max_ns",
                    positive=True)
    dt = _number(_want(cfg, "dt_ns", "", 1.0), "dt_ns", positive=True)
    n_traj = _integer(_want(cfg, "trajectories", "", 1000), "trajectories",
                      minimum=1)

    ecfg = EvolveConfig(n_traj=n_traj, seed=seed)
    outcome = simulate_readout(system, mode=mode, t_max=t_max, dt=dt,
                               cfg=ecfg)
    # erasure check: discriminate the bright (leakage) state from the
    # computational pair; report the harder (lower-SNR) dark state.  The
    # angle scan runs on the coherent-amplitude fast path (the optimum
    # depends on the means, not the fitted variances), so full_mc mode
    # pays for only one Husimi-projected evaluation per dark state.
    stats = None
    snr_final = math.inf
    semi = dataclasses.replace(outcome, rho_res=None)
    for dark in system.computational:
        theta = optimal_projection_angle(
            lambda th: signal_stats(semi, system.bright, dark, th))
        st = signal_stats(outcome, system.bright, dark, theta)
        try:
            snr, _ = snr_and_error(st, float(st.t[-1]), res.kappa)
        except ValueError:
            snr = 0.0
        if snr < snr_final:
            stats, snr_final = st, snr
    sub = None
    if bool(_want(cfg, "subspace_probe", "", False)):
        sel = outcome.t[: outcome.stop_index + 1]
        sub = subspace_error_probe(system, sel)
    _write_csv(out, "readout.csv", "readout", cfg_hash, seed,
               readout_csv(stats, outcome, res.kappa, subspace_error=sub))
    _write_csv(out, "trajectories.csv", "readout", cfg_hash, seed,
               trajectories_csv(outcome))


def _gate_common(cfg: dict) -> tuple:
    noise = _noise(cfg["noise"], "noise") if "noise" in cfg else None
    budget = _integer(_want(cfg, "budget", "", 400), "budget", minimum=1)
    optimize = bool(_want(cfg, "optimize", "", True))
    start = _want(cfg, "start", "", None)
    if start is not None:
        blk = _block(start, "start")
        start = {k: _number(v, f"start.{k}") for k, v in blk.items()}
    return noise, budget, optimize, start


def cmd_gate(cfg: dict, out: Path, seed: int, cfg_hash: str) -> None:
    _reject_unknown(
        cfg,
        {"circuit", "kind", "t_total_ns", "delta_ghz", "noise", "budget",
         "optimize", "start", "seed"},
        "",
    )
    params = _circuit(_want(cfg, "circuit", ""), "circuit")
    kind = _choice(_want(cfg, "kind", ""), "kind", ("ef_x", "raman_x"))
    t_total = _number(_want(cfg, "t_total_ns", "", 40.0), "t_total_ns",
                      positive=True)
    noise, budget, optimize, start = _gate_common(cfg)
    if kind == "ef_x":
        result = simulate_ef_x_gate(params, t_total=t_total, noise=noise,
                                    optimize=optimize, budget=budget,
                                    seed=seed, start=start)
    else:
        delta = _number(_want(cfg, "delta_ghz", "", 1.4), "delta_ghz",
                        positive=True)
        result = simulate_raman_x_gate(params, delta=delta, t_total=t_total,
                                       noise=noise, optimize=optimize,
                                       budget=budget, seed=seed, start=start)
    _write_json(out, "gate_result.json", "gate", cfg_hash, seed,
                json.loads(result.to_json()))


def cmd_cz(cfg: dict, out: Path, seed: int, cfg_hash: str) -> None:
    _reject_unknown(
        cfg,
        {"qubit1", "qubit2", "g_published_ghz", "t_total_ns", "envelope",
         "n_knots", "budget", "optimize", "final_eval", "start", "seed"},
        "",
    )
    sys_ = CoupledSystem(
        q1=_circuit(_want(cfg, "qubit1", ""), "qubit1"),
        q2=_circuit(_want(cfg, "qubit2", ""), "qubit2"),
        g_c=coupling_from_published(
            _number(_want(cfg, "g_published_ghz", ""), "g_published_ghz",
                    positive=True)),
    )
    t_total = _number(_want(cfg, "t_total_ns", ""), "t_total_ns",
                      positive=True)
    envelope = _choice(_want(cfg, "envelope", "", "smooth_ansatz"),
                       "envelope",
                       ("smooth_ansatz", "raised_cosine", "square_sin2"))
    n_knots = _integer(_want(cfg, "n_knots", "", 6), "n_knots", minimum=1)
    budget = _integer(_want(cfg, "budget", "", 4000), "budget", minimum=1)
    optimize = bool(_want(cfg, "optimize", "", True))
    final_eval = _choice(_want(cfg, "final_eval", "", "rwa"), "final_eval",
                         ("rwa", "lab"))
    start = _want(cfg, "start", "", None)
    if start is not None:
        blk = _block(start, "start")
        start = {k: _number(v, f"start.{k}") for k, v in blk.items()}

    result, gspec, trace = simulate_cz_gate(
        sys_, t_total, envelope_kind=envelope, n_knots=n_knots,
        optimize=optimize, budget=budget, seed=seed, final_eval=final_eval,
        start=start)
    payload = json.loads(result.to_json())
    payload["n_eval"] = trace["n_eval"]
    _write_json(out, "cz_result.json", "cz", cfg_hash, seed, payload)

    env = cz_envelope(gspec, envelope)
    t = np.linspace(0.0, t_total, 501)
    amp = np.asarray([env(tk) for tk in t], dtype=complex)
    lines = ["t_ns,re_amp_ghz,im_amp_ghz"]
    for tk, ak in zip(t, amp):
        lines.append(f"{_fmt(tk)},{_fmt(ak.real)},{_fmt(ak.imag)}")
    _write_csv(out, "pulse.csv", "cz", cfg_hash, seed,
               "\n".join(lines) + "\n")


_COMMANDS = {
    "spectrum": cmd_spectrum,
    "coherence": cmd_coherence,
    "chi": cmd_chi,
    "readout": cmd_readout,
    "gate": cmd_gate,
    "cz": cmd_cz,
}


def _limit_threads() -> None:
    cap = os.environ.get("FLUXLAB_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fluxlab",
        description="Integer-fluxonium erasure-qubit workflows.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    _limit_threads()
    try:
        try:
            raw = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}")
        try:
            cfg = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON: {exc}")
        if not isinstance(cfg, dict):
            raise ConfigError("config: top level must be an object")
        seed = args.seed
        if seed is None:
            seed = _integer(_want(cfg, "seed", "", 0), "seed", minimum=0)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg_hash = _config_hash(cfg, seed)
        _COMMANDS[args.command](cfg, out, seed, cfg_hash)
    except ConfigError as exc:
        print(f"fluxlab: config error: {exc}", file=sys.stderr)
        return 2
    except BudgetExhausted as exc:
        print(f"fluxlab: budget exhausted: {exc}", file=sys.stderr)
        return 4
    except FluxlabError as exc:
        print(f"fluxlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
