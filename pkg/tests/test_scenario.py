import textwrap

import numpy as np
import pytest

from dne.operators import Regime, classify_regime
from dne.scenario import ParseError, Primitive, ValidationError, load_scenario

MINIMAL = """
[mesh]
dimension = 1
extents = 0 1
resolution = 50

[exponent]
kind = constant
value = 2.5

[problem]
q = 1.25

[potential]
kind = constant
profile = bump 1.0

[initial]
profile = bump 0.5
"""


def write(tmp_path, text, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


class TestLoadScenario:
    def test_minimal_config_defaults(self, tmp_path):
        sc = load_scenario(write(tmp_path, MINIMAL))
        assert sc.dimension == 1
        assert sc.resolution == [50]
        assert sc.q == 1.25
        assert sc.steps == 20 and sc.horizon == 1.0  # documented defaults
        assert not sc.source_enabled

    def test_builds_runtime_objects(self, tmp_path):
        sc = load_scenario(write(tmp_path, MINIMAL))
        setup = sc.build_evolution_setup()
        assert setup.mesh.n_elements == 50
        assert setup.op.exponent.p_minus == 2.5
        # 2q = 2.5 = p exactly: the boundary case classifies as mixed
        assert classify_regime(setup.op.exponent, sc.q) is Regime.MIXED

    def test_missing_file_is_parse_error(self):
        with pytest.raises(ParseError):
            load_scenario("/nonexistent/scenario.cfg")

    def test_malformed_file_is_parse_error(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(write(tmp_path, "not a config\n[mesh"))

    def test_q_range_violation_tagged(self, tmp_path):
        bad = MINIMAL.replace("value = 2.5", "value = 1.8").replace(
            "q = 1.25", "q = 2.0")
        with pytest.raises(ValidationError) as err:
            load_scenario(write(tmp_path, bad))
        assert err.value.tag == "q ∈ (1, p_-)"

    def test_exponent_below_one_tagged(self, tmp_path):
        bad = MINIMAL.replace("value = 2.5", "value = 0.9")
        with pytest.raises(ValidationError) as err:
            load_scenario(write(tmp_path, bad))
        assert err.value.tag == "1 < p_-"

    def test_zero_envelope_tagged(self, tmp_path):
        bad = MINIMAL + "\n[potential]\nkind = constant\nprofile = bump 1.0\n" \
                        "lower_envelope = constant 0.0\n"
        # configparser rejects duplicate sections; build a fresh text instead
        text = MINIMAL.replace("profile = bump 1.0",
                               "profile = bump 1.0\nlower_envelope = constant 0.0")
        with pytest.raises(ValidationError) as err:
            load_scenario(write(tmp_path, text))
        assert err.value.tag == "(H_h)"

    def test_source_beta_violation_tagged(self, tmp_path):
        text = MINIMAL + textwrap.dedent("""
            [source]
            enabled = true
            g = constant 1.0
            gamma = 1.0
            beta = 0.3
            """)
        with pytest.raises(ValidationError) as err:
            load_scenario(write(tmp_path, text))
        assert err.value.tag == "(f_1)"

    def test_source_gamma_violation_tagged(self, tmp_path):
        text = MINIMAL + textwrap.dedent("""
            [source]
            enabled = true
            g = constant 1.0
            gamma = -0.3
            beta = 0.0
            """)
        with pytest.raises(ValidationError) as err:
            load_scenario(write(tmp_path, text))
        assert err.value.tag == "(f_2)"

    def test_negative_weight_tagged(self, tmp_path):
        text = MINIMAL + "\n[operator]\npartition = 1\nweight.1 = constant -1.0\n"
        with pytest.raises(ValidationError) as err:
            load_scenario(write(tmp_path, text))
        assert err.value.tag == "(A_1)"


class TestPrimitives:
    def test_parse_errors(self):
        with pytest.raises(ParseError):
            Primitive.parse("unknown 1.0")
        with pytest.raises(ParseError):
            Primitive.parse("constant")
        with pytest.raises(ParseError):
            Primitive.parse("bump a")

    def test_evaluation(self, mesh_1d):
        pts = mesh_1d.vertices
        assert np.allclose(Primitive.parse("constant 2.5")(pts, mesh_1d), 2.5)
        aff = Primitive.parse("affine 1.0 2.0")(pts, mesh_1d)
        assert np.allclose(aff, 1.0 + 2.0 * pts[:, 0])
        bump = Primitive.parse("bump 3.0")(np.array([[0.5]]), mesh_1d)
        assert bump[0] == pytest.approx(3.0)
        sp = Primitive.parse("sin-product 1.0")(np.array([[0.5]]), mesh_1d)
        assert sp[0] == pytest.approx(1.0)
        pd = Primitive.parse("power-of-delta 2.0 1.0")(np.array([[0.25]]), mesh_1d)
        assert pd[0] == pytest.approx(0.5)


class TestPotentialKinds:
    def test_decaying_reaches_limit(self, tmp_path):
        text = MINIMAL.replace("kind = constant\nprofile = bump 1.0",
                               "kind = decaying\nprofile = bump 1.0\neta = 0.5")
        sc = load_scenario(write(tmp_path, text))
        mesh = sc.build_mesh()
        pot = sc.build_potential(mesh)
        assert pot.limit is not None
        h0 = pot(0.0)
        h_late = pot(1e6)
        assert np.all(h0 >= pot.limit)
        np.testing.assert_allclose(h_late, pot.limit, rtol=1e-8)
        # decay satisfies the O(t^-(1+eta)) envelope used for stabilization
        t = 100.0
        drift = np.max(np.abs(pot(t) - pot.limit))
        assert drift <= np.max(pot.limit) * (1.0 + t) ** (-1.5) + 1e-15

    def test_tabulated_interpolation(self, tmp_path):
        text = MINIMAL.replace(
            "kind = constant\nprofile = bump 1.0",
            "kind = tabulated\ntimes = 0 1\nprofile.1 = constant 1.0\n"
            "profile.2 = constant 2.0\nlower_envelope = constant 1.0")
        sc = load_scenario(write(tmp_path, text))
        mesh = sc.build_mesh()
        pot = sc.build_potential(mesh)
        assert pot(0.5)[0] == pytest.approx(1.5)
        assert pot(5.0)[0] == pytest.approx(2.0)  # clamped at the last profile


class TestInitialFromFile:
    def test_round_trip(self, tmp_path):
        from dne.io_utils import write_field_csv
        from dne.meshing import interpolate

        sc = load_scenario(write(tmp_path, MINIMAL))
        mesh = sc.build_mesh()
        v = interpolate(mesh, lambda x: 0.25 * np.sin(np.pi * x[:, 0]))
        path = tmp_path / "v0.csv"
        write_field_csv(v, str(path))
        text = MINIMAL.replace("profile = bump 0.5", f"file = {path}")
        sc2 = load_scenario(write(tmp_path, text, name="file_init.cfg"))
        v2 = sc2.build_initial(sc2.build_mesh())
        np.testing.assert_array_equal(v2.values, v.values)
