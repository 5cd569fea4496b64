from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sqglab.config import ConfigError, RunConfig, load_config, parse_config, render
from sqglab.fields import SpectralScalarField as F
from sqglab.io import field_to_csv, write_container


def diag_keys(text, **kw):
    with pytest.raises(ConfigError) as e:
        parse_config(text, **kw)
    return e.value.diagnostics


def test_minimal_config_fills_defaults():
    cfg = parse_config("galerkin_n = 8\n")
    assert cfg.galerkin_n == 8 and cfg.scheme == "ExponentialEM" and cfg.delta == 0.5
    assert cfg.kappa is None and cfg.initial_data == "triple" and cfg.deviation_epsilon is None
    out = render(cfg)
    assert "scheme = ExponentialEM" in out and "delta = 0.5" in out and "kappa" not in out
    assert "deviation_epsilon = auto" in out


def test_boussinesq_defaults():
    cfg = parse_config("equation = Boussinesq\n")
    assert cfg.kappa == 0.5 and cfg.initial_data == "buoyancy"
    xi, omega = cfg.initial_fields()
    assert xi.coefficient((1, 0)) == 1.0 and omega.coefficient((0, 1)) == 1.0


def test_delta_out_of_range_is_reported_with_interval():
    (d,) = diag_keys("nu = 0.1\ndelta = 1.5\n")
    assert d.line == 2 and d.key == "delta" and "(0, 1)" in d.message


def test_diagnostics_carry_line_numbers():
    ds = diag_keys("# comment\n\nfoo = 1\nnu = abc\nnot a pair\nnu = 2\n")
    assert [(d.line, d.key) for d in ds] == [(3, "foo"), (4, "nu"), (5, ""), (6, "nu")]
    assert "unknown key" in ds[0].message and "duplicate" in ds[3].message


@pytest.mark.parametrize("text,key", [
    ("kappa = 0.3", "kappa"),
    ("nu = -1", "nu"),
    ("dt = 0.3\nt_final = 0.5", "t_final"),
    ("scheme = RK4", "scheme"),
    ("theta_family = gauss", "theta_family"),
    ("theta_radii = 0.5, 2", "theta_radii"),
    ("theta_radii = 4, 2", "theta_radii"),
    ("theta_radii = 2, 2.1", "theta_radii"),  # same shell set, same ratio
    ("theta_alpha = 1", "theta_alpha"),
    ("ensemble_size = 1", "ensemble_size"),
    ("galerkin_n = 2.5", "galerkin_n"),
    ("record_times = 0", "record_times"),
    ("threads = 0", "threads"),
    ("nu = inf", "nu"),
    ("equation = Euler", "equation"),
    ("initial_data = nosuchfile.csv", "initial_data"),
    ("deviation_epsilon = -1", "deviation_epsilon"),
])
def test_rejections(text, key):
    assert key in [d.key for d in diag_keys(text + "\n")]


def test_config_error_as_dict():
    with pytest.raises(ConfigError) as e:
        parse_config("delta = 2\n")
    body = e.value.as_dict()
    assert body["error"] == "validation" and body["diagnostics"][0]["key"] == "delta"


names = st.text("abcdefghijklmnopqrstuvwxyz_/-.0123456789", min_size=1, max_size=20)


@st.composite
def configs(draw):
    eq = draw(st.sampled_from(["SQG", "Boussinesq"]))
    dt = draw(st.sampled_from([1e-4, 2e-4, 5e-5, 1e-3]))
    steps = draw(st.integers(1, 5000))
    fam = draw(st.sampled_from(["cutoff", "power"]))
    radii = sorted(draw(st.sets(st.integers(1, 6), min_size=1, max_size=4)))
    return RunConfig(
        equation=eq, galerkin_n=draw(st.integers(1, 64)), nu=draw(st.floats(0, 5)),
        kappa=draw(st.floats(0, 5)) if eq == "Boussinesq" else None, dt=dt, t_final=steps * dt,
        scheme=draw(st.sampled_from(["ExponentialEM", "ItoEulerMaruyama", "StratonovichHeun",
                                     "SplitExponential"])),
        theta_family=fam, theta_radii=tuple(float(2**r) for r in radii),
        theta_alpha=draw(st.floats(0, 0.5)) if fam == "power" else 0.0,
        ensemble_size=draw(st.integers(2, 10**4)), seed=draw(st.integers(0, 2**63)),
        delta=draw(st.floats(0.01, 0.99)), deviation_epsilon=draw(st.none() | st.floats(0, 10)),
        record_times=draw(st.integers(1, 500)), output_dir=draw(names),
        initial_data=draw(st.sampled_from(["zero", "random"])), threads=draw(st.integers(1, 64)))


@settings(max_examples=50)
@given(configs())
def test_render_parse_round_trip(cfg):
    back = parse_config(render(cfg), check_files=False)
    assert back == cfg
    assert render(back) == render(cfg)


@given(configs(), names, st.integers(1, 64))
def test_hash_ignores_output_and_threads(cfg, out, threads):
    assert replace(cfg, output_dir=out, threads=threads).config_hash() == cfg.config_hash()
    assert replace(cfg, seed=cfg.seed + 1).config_hash() != cfg.config_hash()


def test_output_root_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("SQGLAB_OUTPUT_ROOT", str(tmp_path))
    assert parse_config("").output_dir == str(tmp_path / "sqglab-output")
    monkeypatch.delenv("SQGLAB_OUTPUT_ROOT")
    assert parse_config("").output_dir == "sqglab-output"
    assert parse_config("output_dir = elsewhere").output_dir == "elsewhere"


def test_initial_data_from_files(tmp_path):
    f = F.from_modes({(2, 1): 0.5, (0, 1): -1.0}, 3)
    (tmp_path / "w.csv").write_text(field_to_csv(f))
    (tmp_path / "c.conf").write_text("galerkin_n = 6\ninitial_data = w.csv\n")
    (omega,) = load_config(tmp_path / "c.conf").initial_fields(tmp_path)
    assert omega.N == 6 and omega.coefficient((2, 1)) == 0.5 and omega.coefficient((0, 1)) == -1.0

    xi = F.basis((1, 1), 10)
    (tmp_path / "b.sqgfld").write_bytes(write_container({"xi/coefficients": xi.coeffs,
                                                         "omega/coefficients": F.zeros(10).coeffs}))
    cfg = parse_config("equation = Boussinesq\ngalerkin_n = 4\ninitial_data = b.sqgfld\n", base_dir=tmp_path)
    xi4, om4 = cfg.initial_fields(tmp_path)
    assert xi4.N == 4 and xi4.coefficient((1, 1)) == 1.0 and om4.norm() == 0

    (tmp_path / "bad.sqgfld").write_bytes(write_container({"omega/coefficients": xi.coeffs}))
    keys = [d.key for d in diag_keys("equation = Boussinesq\ninitial_data = bad.sqgfld\n", base_dir=tmp_path)]
    assert keys == ["initial_data"]
    keys = [d.key for d in diag_keys("equation = Boussinesq\ninitial_data = w.csv\n", base_dir=tmp_path)]
    assert keys == ["initial_data"]


def test_random_preset_is_seeded():
    a = parse_config("initial_data = random\nseed = 3\n").initial_fields()[0]
    b = parse_config("initial_data = random\nseed = 3\n").initial_fields()[0]
    c = parse_config("initial_data = random\nseed = 4\n").initial_fields()[0]
    assert np.array_equal(a.coeffs, b.coeffs) and not np.array_equal(a.coeffs, c.coeffs)
    assert a.norm() == pytest.approx(1.0)
