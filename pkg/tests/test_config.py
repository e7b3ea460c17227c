import math

import numpy as np
import pytest

from onephase import CONFIG_DIR, bundled_config
from onephase.config import (SCHEMA, ConfigError, build_kernel, build_options, build_problem,
                             dumps, dyadic_radii, load, parse, schema_text, validate)
from onephase.kernel import verify_structural_conditions


def cfg_of(text):
    return validate(parse(text))


def error_key(text):
    with pytest.raises(ConfigError) as info:
        build_problem(cfg_of(text))
    return info.value.key


def test_parse_literals_comments_and_bare_words():
    raw = parse('''
        # a comment line
        kernel.form = jetflow   # trailing comment
        experiment.name = "run #3"
        grid.nodes = [21, 21]
        solve.mollify = true
        solve.tol = null
    ''')
    assert raw == {"kernel.form": "jetflow", "experiment.name": "run #3",
                   "grid.nodes": [21, 21], "solve.mollify": True, "solve.tol": None}


@pytest.mark.parametrize("text, key", [
    ("kernel.p = 2\nkernel.p = 3", "kernel.p"),
    ("kernel.p 2", "line 1"),
    ("kernel.form = {oops", "kernel.form"),
])
def test_parse_errors_name_the_line_or_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse(text)
    assert info.value.key == key


def test_defaults_fill_every_schema_key():
    cfg = cfg_of("")
    assert set(cfg) == set(SCHEMA)
    assert cfg["kernel.p"] == 2.0 and cfg["solve.sweep_order"] == "two-color"


@pytest.mark.parametrize("text, key", [
    ("kernel.q = 2", "kernel.q"),
    ("kernel.p = \"two\"", "kernel.p"),
    ("kernel.form = cubic", "kernel.form"),
    ("kernel.m = 2", "kernel.m"),
    ("kernel.p = 3\nkernel.m = 3.5", "kernel.m"),
    ("kernel.p = 1.5", "kernel.p"),
    ("kernel.form = jetflow\nkernel.p = 3\nkernel.m = 1", "kernel.p"),
    ("kernel.eps_Q = 1.5", "kernel.eps_Q"),
    ("grid.nodes = [21]", "grid.nodes"),
    ("grid.nodes = [2, 21]", "grid.nodes"),
    ("grid.extent = [1, -1]", "grid.extent"),
    ("solve.omega = 2.5", "solve.omega"),
    ("analysis.checks = [\"norms\", \"magic\"]", "analysis.checks"),
    ("flatness.rtilde = 1", "flatness.rtilde"),
    ("grid.dim = 3", "grid.dim"),
])
def test_schema_violations_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        cfg_of(text)
    assert info.value.key == key
    assert str(info.value).startswith(key)


def test_ints_are_accepted_for_floats():
    assert cfg_of("kernel.p = 3")["kernel.p"] == 3.0


def test_canonical_dump_round_trips():
    cfg = load(bundled_config("jetflow"))
    text = dumps(cfg)
    again = cfg_of(text)
    assert all(again[k] == cfg[k] for k in SCHEMA)
    assert dumps(again) == text
    assert text.splitlines() == sorted(text.splitlines())


def test_schema_text_lists_every_key():
    lines = schema_text().splitlines()
    assert len(lines) == len(SCHEMA)
    assert any(line.startswith("kernel.m : float = 1.0") for line in lines)


def test_load_reports_unreadable_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "missing.cfg")


@pytest.mark.parametrize("name", ["strip_p2", "jetflow"])
def test_bundled_configs_build_sound_kernels(name):
    cfg = load(bundled_config(name))
    prob = build_problem(cfg)
    build_options(cfg)
    assert verify_structural_conditions(prob.kernel).passed
    assert bundled_config(name) == CONFIG_DIR / f"{name}.cfg"
    with pytest.raises(FileNotFoundError):
        bundled_config("nope")


def test_planar_trace_from_oracle():
    prob = build_problem(cfg_of("grid.nodes = [21, 21]\nboundary.from_oracle = true\nboundary.b = 0.5"))
    full = prob.boundary.full()
    y = prob.grid.coords()[..., 1]
    # slope 1 and offset 0.5 on the unit square
    assert np.allclose(full[prob.grid.boundary_mask], np.maximum(y - 0.5, 0.0)[prob.grid.boundary_mask])


def test_planar_trace_from_oracle_scales_with_q():
    prob = build_problem(cfg_of("grid.nodes = [21, 21]\nboundary.from_oracle = true\n"
                                "kernel.Q.value = 4\nboundary.b = 0.5"))
    top = prob.boundary.full()[:, -1]
    # slope 2 reaching b = 0.5 at y = 1 puts the interface at y = 0.75
    assert np.allclose(top, 0.5)
    assert np.allclose(prob.boundary.full()[0, :], 2 * np.maximum(np.linspace(0, 1, 21) - 0.75, 0))


def test_explicit_planar_and_edge_constant_traces():
    prob = build_problem(cfg_of("grid.nodes = [11, 11]\nboundary.slope = 2\nboundary.normal = [1, 0]\n"
                                "boundary.offset = 0.3"))
    x = prob.grid.coords()[..., 0]
    m = prob.grid.boundary_mask
    assert np.allclose(prob.boundary.full()[m], 2 * np.maximum(x - 0.3, 0.0)[m])
    prob = build_problem(cfg_of("grid.nodes = [11, 11]\nboundary.family = edge-constant\n"
                                "boundary.top = 1\nboundary.left = 0.5"))
    full = prob.boundary.full()
    assert full[5, -1] == 1.0 and full[0, 5] == 0.5 and full[5, 0] == 0.0


def test_radial_trace():
    prob = build_problem(cfg_of("grid.nodes = [11, 11]\ngrid.origin = [-1, -1]\ngrid.extent = [2, 2]\n"
                                "boundary.family = radial-trace\nboundary.center = [0, -1.2]\n"
                                "boundary.radius = 1\nboundary.slope = 2"))
    X = prob.grid.coords()
    rho = np.linalg.norm(X - [0, -1.2], axis=-1)
    m = prob.grid.boundary_mask
    assert np.allclose(prob.boundary.full()[m], (2 * np.log(np.maximum(rho, 1.0)))[m])


def test_table_boundary_and_fields(tmp_path):
    xs = np.linspace(0, 1, 5)
    rows = ["x,y,value"] + [f"{x},{y},{x + y}" for x in xs for y in xs]
    (tmp_path / "bd.csv").write_text("\n".join(rows) + "\n")
    rows = ["x,y,a11,a12,a22,f,Q"] + [f"{x},{y},1,0,1,0,{1 + 0.1 * x}" for x in xs for y in xs]
    (tmp_path / "fields.csv").write_text("\n".join(rows) + "\n")
    text = ("grid.nodes = [5, 5]\nboundary.family = table\nboundary.path = bd.csv\n"
            "kernel.table = fields.csv\nkernel.A.family = table\nkernel.Q.family = table\n")
    path = tmp_path / "t.cfg"
    path.write_text(text)
    prob = build_problem(load(path))
    X = prob.grid.coords()
    m = prob.grid.boundary_mask
    assert np.allclose(prob.boundary.full()[m], X.sum(axis=-1)[m])
    assert prob.kernel.Q([0.5, 0.5]) == pytest.approx(1.05)
    assert np.allclose(prob.kernel.A([0.25, 0.75]), np.eye(2))


def test_builder_errors_name_their_key(tmp_path):
    assert error_key("boundary.family = table") == "boundary.path"
    assert error_key("kernel.Q.family = table") == "kernel.table"
    assert error_key("boundary.normal = [1, 1]") == "boundary.normal"
    assert error_key("boundary.family = edge-constant\nboundary.top = -1") == "boundary"
    assert error_key("kernel.form = jetflow\nboundary.from_oracle = true") == "boundary.from_oracle"
    with pytest.raises(ConfigError) as info:
        build_options(cfg_of("solve.tol = -1"))
    assert info.value.key == "solve"


def test_kernel_domain_is_the_box():
    k = build_kernel(cfg_of("grid.origin = [0, 0]\ngrid.extent = [1, 2]"))
    assert k.domain == ((0.0, 0.0), (1.0, 2.0))


def test_dyadic_radii():
    h = 0.01
    assert dyadic_radii(h, 1.0) == pytest.approx([0.08, 0.16, 0.32])
    r = dyadic_radii(1e-4, 1.0, octaves=3)
    assert len(r) == 4 and math.isclose(r[-1] / r[0], 8.0)
