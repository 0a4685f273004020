"""End-to-end tests of the ``fluxlab`` command-line front end.

Each test drives :func:`fluxlab.cli.main` with a JSON config written to a
temporary directory and inspects the exit code, the stderr message, and the
result files (CSV header blocks, JSON ``meta`` objects, physics anchors).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from fluxlab.cli import main
from fluxlab.errors import BudgetExhausted

EF_CIRCUIT = {"e_j_ghz": 3.0, "e_c_ghz": 0.75, "e_l_ghz": 0.146}
GF_CIRCUIT = {"e_j_ghz": 4.0, "e_c_ghz": 2.0, "e_l_ghz": 0.133}

EF_READOUT = {
    "circuit": EF_CIRCUIT,
    "resonator": {
        "omega_r_ghz": 8.461,
        "g_published_ghz": 0.25,
        "kappa_per_ns": 1.0 / 200.0,
    },
    "bright_level": 0,
    "computational_levels": [1, 2],
    "amplitude_ghz": 0.0628,
    "mode": "semiclassical",
}


def run(tmp_path: Path, command: str, cfg: dict, seed: int | None = None,
        out: str = "out") -> tuple[int, Path]:
    cfg_file = tmp_path / f"{command}.json"
    cfg_file.write_text(json.dumps(cfg))
    out_dir = tmp_path / out
    argv = [command, "--config", str(cfg_file), "--out", str(out_dir)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    return main(argv), out_dir


def csv_rows(path: Path) -> list[list[str]]:
    """Data rows of a result CSV: comment block and column header stripped."""
    lines = [ln for ln in path.read_text().splitlines()
             if ln and not ln.startswith("#")]
    return [ln.split(",") for ln in lines[1:]]


class TestSpectrum:
    def test_ef_transition_frequencies(self, tmp_path):
        code, out = run(tmp_path, "spectrum",
                        {"circuit": EF_CIRCUIT, "levels": [0, 1, 2],
                         "n_levels": 12})
        assert code == 0
        payload = json.loads((out / "spectrum.json").read_text())
        assert payload["omega_ge_ghz"] == pytest.approx(2.64, abs=0.01)
        assert payload["omega_ef_ghz"] == pytest.approx(0.030, abs=0.005)

    def test_empty_level_list_writes_header_only_csv(self, tmp_path):
        code, out = run(tmp_path, "spectrum",
                        {"circuit": EF_CIRCUIT, "levels": []})
        assert code == 0
        assert csv_rows(out / "matrix_elements.csv") == []

    def test_negative_e_c_exits_2_with_field_path(self, tmp_path, capsys):
        bad = {"circuit": {**EF_CIRCUIT, "e_c_ghz": -0.75}}
        code, _ = run(tmp_path, "spectrum", bad)
        assert code == 2
        err = capsys.readouterr().err
        assert "circuit.e_c_ghz" in err
        assert "-0.75" in err

    def test_unknown_key_exits_2_and_names_the_key(self, tmp_path, capsys):
        code, _ = run(tmp_path, "spectrum",
                      {"circuit": EF_CIRCUIT, "bogus": 1})
        assert code == 2
        assert "bogus: unknown key" in capsys.readouterr().err

    def test_unknown_nested_key_reports_full_path(self, tmp_path, capsys):
        code, _ = run(tmp_path, "spectrum",
                      {"circuit": {**EF_CIRCUIT, "e_j_mhz": 3000.0}})
        assert code == 2
        assert "circuit.e_j_mhz: unknown key" in capsys.readouterr().err


class TestCoherence:
    def test_gf_level_1_lifetime(self, tmp_path):
        code, out = run(tmp_path, "coherence",
                        {"circuit": GF_CIRCUIT, "noise": {}, "n_levels": 7})
        assert code == 0
        rows = csv_rows(out / "rates.csv")
        assert len(rows) == 7
        level_1 = next(r for r in rows if r[0] == "1")
        assert float(level_1[1]) == pytest.approx(20.12, rel=0.10)

    def test_zero_noise_gives_infinite_lifetimes(self, tmp_path):
        cfg = {"circuit": GF_CIRCUIT,
               "noise": {"a_flux_phi0": 0.0, "q_cap": math.inf}}
        code, out = run(tmp_path, "coherence", cfg)
        assert code == 0
        for row in csv_rows(out / "rates.csv"):
            assert math.isinf(float(row[1]))

    def test_e_c_sweep_three_rows_byte_identical_across_runs(self, tmp_path):
        cfg = {
            "circuit": GF_CIRCUIT,
            "sweep": {"vary": "e_c_ghz", "grid_ghz": [1.8, 2.0, 2.2],
                      "pair": [0, 2]},
        }
        code_a, out_a = run(tmp_path, "coherence", cfg, out="a")
        code_b, out_b = run(tmp_path, "coherence", cfg, out="b")
        assert code_a == code_b == 0
        sweep_a = (out_a / "sweep.csv").read_bytes()
        assert sweep_a == (out_b / "sweep.csv").read_bytes()
        assert len(csv_rows(out_a / "sweep.csv")) == 3


class TestChi:
    def test_gf_scan_writes_rows_over_the_band(self, tmp_path):
        cfg = {"circuit": GF_CIRCUIT, "band_ghz": [13.3, 14.0],
               "g_published_ghz": 0.3, "n_points": 21}
        code, out = run(tmp_path, "chi", cfg)
        assert code == 0
        assert len(csv_rows(out / "chi_scan.csv")) == 21

    def test_inverted_band_exits_2(self, tmp_path, capsys):
        cfg = {"circuit": GF_CIRCUIT, "band_ghz": [14.0, 13.3],
               "g_published_ghz": 0.3}
        code, _ = run(tmp_path, "chi", cfg)
        assert code == 2
        assert "band_ghz" in capsys.readouterr().err


class TestReadout:
    def test_ef_final_snr_in_expected_band(self, tmp_path):
        code, out = run(tmp_path, "readout", EF_READOUT)
        assert code == 0
        rows = csv_rows(out / "readout.csv")
        snr_final = float(rows[-1][1])
        assert 4.0 <= snr_final <= 10.0

    def test_zero_amplitude_snr_column_all_zero(self, tmp_path):
        cfg = {**EF_READOUT, "amplitude_ghz": 0.0, "t_max_ns": 200.0}
        code, out = run(tmp_path, "readout", cfg)
        assert code == 0
        rows = csv_rows(out / "readout.csv")
        assert rows
        assert all(float(r[1]) == 0.0 for r in rows)

    def test_identical_seed_gives_identical_trajectories(self, tmp_path):
        cfg = {**EF_READOUT, "mode": "full_mc", "amplitude_ghz": 0.02,
               "trajectories": 4, "t_max_ns": 150.0, "dt_ns": 2.0}
        code_a, out_a = run(tmp_path, "readout", cfg, seed=3, out="a")
        code_b, out_b = run(tmp_path, "readout", cfg, seed=3, out="b")
        assert code_a == code_b == 0
        traj_a = (out_a / "trajectories.csv").read_bytes()
        assert traj_a == (out_b / "trajectories.csv").read_bytes()


class TestGate:
    # pre-optimized 40 ns e-f X pulse (seed-0 search result, reused so the
    # test is a cheap single evaluation)
    EF_X_START = {
        "a_ghz": 0.6619785455891076,
        "delta_ghz": -0.008928386435816404,
        "ramp_ns": 12.187050425161246,
    }

    def test_ef_x_single_evaluation(self, tmp_path):
        cfg = {"circuit": EF_CIRCUIT, "kind": "ef_x", "t_total_ns": 40.0,
               "optimize": False, "start": self.EF_X_START}
        code, out = run(tmp_path, "gate", cfg)
        assert code == 0
        payload = json.loads((out / "gate_result.json").read_text())
        assert payload["fidelity"] >= 0.999
        assert payload["meta"]["config_sha256"]


class TestCz:
    def test_oversized_coupling_exits_3_naming_the_error(self, tmp_path,
                                                         capsys):
        cfg = {
            "qubit1": GF_CIRCUIT,
            "qubit2": {"e_j_ghz": 8.0, "e_c_ghz": 4.2, "e_l_ghz": 0.1},
            "g_published_ghz": 20.0,
            "t_total_ns": 40.0,
            "optimize": False,
        }
        code, _ = run(tmp_path, "cz", cfg)
        assert code == 3
        assert "LabelingError" in capsys.readouterr().err


class TestPlumbing:
    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        code = main(["spectrum", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "config" in capsys.readouterr().err

    def test_invalid_json_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["spectrum", "--config", str(bad),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "invalid JSON" in capsys.readouterr().err

    def test_budget_exhausted_maps_to_exit_4(self, tmp_path, capsys,
                                             monkeypatch):
        import fluxlab.cli as cli

        def broke(cfg, out, seed, cfg_hash):
            raise BudgetExhausted("spent")

        monkeypatch.setitem(cli._COMMANDS, "spectrum", broke)
        code, _ = run(tmp_path, "spectrum", {"circuit": EF_CIRCUIT})
        assert code == 4
        assert "budget exhausted" in capsys.readouterr().err

    def test_headers_carry_config_hash_and_seed(self, tmp_path):
        code, out = run(tmp_path, "spectrum", {"circuit": EF_CIRCUIT},
                        seed=5)
        assert code == 0
        text = (out / "matrix_elements.csv").read_text()
        hash_line = next(ln for ln in text.splitlines()
                         if ln.startswith("# config_sha256: "))
        digest = hash_line.split(": ")[1]
        assert len(digest) == 64 and int(digest, 16) >= 0
        assert "# seed: 5" in text
        meta = json.loads((out / "spectrum.json").read_text())["meta"]
        assert meta["config_sha256"] == digest
        assert meta["seed"] == 5

    def test_seed_override_changes_config_hash(self, tmp_path):
        cfg = {"circuit": EF_CIRCUIT}
        _, out_a = run(tmp_path, "spectrum", cfg, seed=0, out="a")
        _, out_b = run(tmp_path, "spectrum", cfg, seed=1, out="b")
        meta_a = json.loads((out_a / "spectrum.json").read_text())["meta"]
        meta_b = json.loads((out_b / "spectrum.json").read_text())["meta"]
        assert meta_a["config_sha256"] != meta_b["config_sha256"]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = {"circuit": EF_CIRCUIT, "levels": [0, 1, 2, 3]}
        _, out_a = run(tmp_path, "spectrum", cfg, out="a")
        _, out_b = run(tmp_path, "spectrum", cfg, out="b")
        for name in ("spectrum.json", "matrix_elements.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
