import json
import textwrap

import numpy as np
import pytest

from dne.cli import main
from dne.io_utils import field_from_csv, write_field_csv
from dne.meshing import interpolate

CONFIG = """
[mesh]
dimension = 1
extents = 0 1
resolution = 40

[exponent]
kind = constant
value = 2.5

[problem]
q = 1.25

[source]
enabled = true
g = constant 1.0
gamma = 1.0
beta = 0.0

[potential]
kind = constant
profile = bump 1.0

[initial]
profile = bump 0.5

[run]
horizon = 0.5
steps = 5
lambda = 1.0
seed = 4242

[sweep]
kind = lambda
lambdas = 0.5 1 2 4
"""


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(textwrap.dedent(CONFIG))
    return str(path)


class TestFieldCsvRoundTrip:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_full_precision(self, tmp_path, dim, mesh_1d, mesh_2d):
        mesh = mesh_1d if dim == 1 else mesh_2d
        v = interpolate(mesh, lambda x: np.sin(np.pi * x[:, 0]) / 3.0)
        path = tmp_path / "field.csv"
        write_field_csv(v, str(path))
        back = field_from_csv(mesh, str(path))
        np.testing.assert_array_equal(back.values, v.values)

    def test_header_format(self, tmp_path, mesh_1d):
        path = tmp_path / "f.csv"
        write_field_csv(interpolate(mesh_1d, lambda x: x[:, 0]), str(path))
        assert open(path).readline().strip() == "# columns: x,value"


class TestCommands:
    def test_solve_elliptic(self, config_path, tmp_path):
        out = tmp_path / "o1"
        assert main(["solve-elliptic", "--config", config_path, "--out", str(out)]) == 0
        manifest = json.load(open(out / "manifest.json"))
        assert manifest["seed"] == 4242
        assert manifest["regime"] == "mixed"
        assert (out / "solution.csv").exists()

    def test_stationary(self, config_path, tmp_path):
        out = tmp_path / "o2"
        assert main(["stationary", "--config", config_path, "--out", str(out)]) == 0
        assert (out / "stationary.csv").exists()

    def test_evolve_manifest_links_stabilization(self, config_path, tmp_path):
        out = tmp_path / "o3"
        assert main(["evolve", "--config", config_path, "--out", str(out)]) == 0
        manifest = json.load(open(out / "manifest.json"))
        assert "stabilization_error_final" in manifest
        assert manifest["dissipation_ok"] is True
        assert len(manifest["diagnostics"]) == 5
        assert manifest["config_echo"].strip().startswith("[mesh]")
        assert (out / "field_00005.csv").exists()

    def test_verify_subset(self, config_path, tmp_path):
        out = tmp_path / "o4"
        code = main(["verify", "--config", config_path, "--out", str(out),
                     "--check", "alg-inequality", "--check", "picone",
                     "--seed", "7"])
        assert code == 0
        report = json.load(open(out / "report.json"))
        assert [r["check_name"] for r in report] == ["alg-inequality", "picone"]
        assert all(r["passed"] for r in report)

    def test_sweep_slope(self, config_path, tmp_path):
        out = tmp_path / "o5"
        assert main(["sweep", "--config", config_path, "--out", str(out)]) == 0
        manifest = json.load(open(out / "manifest.json"))
        assert manifest["fitted_slope"] == pytest.approx(1.0 / 1.5, abs=0.02)
        rows = [l for l in open(out / "summary.csv") if not l.startswith("#")]
        assert len(rows) == 4

    def test_sweep_pq_grid(self, config_path, tmp_path):
        text = textwrap.dedent(CONFIG).replace(
            "kind = lambda\nlambdas = 0.5 1 2 4",
            "kind = pq\np_values = 2.5 3.0\nq_values = 1.2 1.4")
        cfg = tmp_path / "pq.cfg"
        cfg.write_text(text)
        out = tmp_path / "opq"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        rows = [l.strip().split(",") for l in open(out / "summary.csv")
                if not l.startswith("#")]
        assert len(rows) == 4
        regimes = {(r[0], r[1]): r[2] for r in rows}
        assert regimes[("3.0", "1.2")] == "slow-diffusion"
        assert regimes[("2.5", "1.4")] == "fast-diffusion"

    def test_unknown_check_fails(self, config_path, tmp_path):
        code = main(["verify", "--config", config_path, "--out",
                     str(tmp_path / "o6"), "--check", "nope"])
        assert code == 2

    def test_invalid_config_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text(textwrap.dedent(CONFIG).replace("q = 1.25", "q = 3.0"))
        code = main(["stationary", "--config", str(bad), "--out",
                     str(tmp_path / "o7")])
        assert code == 2

    def test_missing_config_exit_code(self, tmp_path):
        code = main(["evolve", "--config", str(tmp_path / "none.cfg"), "--out",
                     str(tmp_path / "o8")])
        assert code == 2
