"""Fixtures: synthetic result files in the fluxlab CLI's published
schemas (comment header block, column header, comma/period CSV)."""

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

HEADER = ("# fluxlab {command}\n"
          "# config_sha256: " + "0" * 64 + "\n"
          "# seed: 0\n")


def write_csv(path: Path, command: str, columns: str, rows: list[str]):
    path.write_text(HEADER.format(command=command) + columns + "\n"
                    + "".join(r + "\n" for r in rows))
    return path


@pytest.fixture
def sweep_csv(tmp_path):
    rows = [
        f"{0.6 + 0.1 * k},{2.4 + 0.01 * k},{2e4 * (k + 1)},"
        f"{5e4 * (k + 1)},{1.5e4 * (k + 1)}"
        for k in range(5)
    ]
    return write_csv(tmp_path / "sweep.csv", "coherence",
                     "e_c,omega_ghz,t1_ns,tphi_ns,t2_ns", rows)


@pytest.fixture
def empty_sweep_csv(tmp_path):
    return write_csv(tmp_path / "sweep.csv", "coherence",
                     "vary,omega_ghz,t1_ns,tphi_ns,t2_ns", [])


@pytest.fixture
def chi_scan_csv(tmp_path):
    # pole at 13.634: chi_e diverges as 1/(omega - pole)
    rows = []
    for k in range(41):
        w = 13.3 + 0.7 * k / 40.0
        chi_e = 1e-4 / (w - 13.634) if abs(w - 13.634) > 1e-6 else 10.0
        rows.append(f"{w:.6f},3.7e-4,{chi_e:.9g},3.8e-4,"
                    f"{abs(chi_e - 3.7e-4):.9g},1e-5")
    return write_csv(tmp_path / "chi_scan.csv", "chi",
                     "omega_r,chi_g,chi_e,chi_f,contrast,mismatch", rows)


@pytest.fixture
def trajectories_csv(tmp_path):
    # bright state: spiral converging to 2+1j; dark state: small loop
    # around the origin returning near it
    rows = []
    for k in range(101):
        t = 4.0 * k
        z = (2 + 1j) * (1 - math.e ** (-t / 80.0)
                        * complex(math.cos(0.05 * t), math.sin(0.05 * t)))
        rows.append(f"{t},bright,{z.real:.9g},{z.imag:.9g}")
    for k in range(101):
        t = 4.0 * k
        r = 0.05 * math.sin(math.pi * k / 100.0)
        rows.append(f"{t},dark,{r * math.cos(0.2 * t):.9g},"
                    f"{r * math.sin(0.2 * t):.9g}")
    return write_csv(tmp_path / "trajectories.csv", "readout",
                     "t_ns,state_label,re_alpha,im_alpha", rows)


@pytest.fixture
def gate_jsons(tmp_path):
    paths = []
    for k, delta in enumerate([-0.02, -0.01, 0.0, 0.01, 0.02]):
        payload = {
            "kind": "raman_x",
            "t_gate_ns": 50.0,
            "fidelity": 1.0 - 1e-4 * (1 + 10 * delta**2 / 4e-4),
            "p_erasure": 4e-4,
            "p_other": 1e-5,
            "params": {"a_ghz": 0.8, "delta2_ghz": delta},
            "theta_z": [0.0, 0.0],
            "converged": True,
            "meta": {"command": "fluxlab gate",
                     "config_sha256": "0" * 64, "seed": 0},
        }
        p = tmp_path / f"gate_{k}.json"
        p.write_text(json.dumps(payload))
        paths.append(p)
    return paths


@pytest.fixture
def pulse_csv(tmp_path):
    rows = [
        f"{0.4 * k},{0.01 * math.sin(math.pi * k / 400.0) ** 2:.9g},0"
        for k in range(401)
    ]
    return write_csv(tmp_path / "pulse.csv", "cz",
                     "t_ns,re_amp_ghz,im_amp_ghz", rows)
