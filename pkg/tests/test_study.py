import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpmaxwell.study import (
    CSV_COLUMNS,
    ConfigError,
    RunRecord,
    StudyError,
    csv_name,
    emit_csv,
    emit_plot,
    fitted_slope,
    format_k,
    parse_complex,
    parse_config,
    projected_dofs,
    read_csv,
    required_nk,
    run_study,
)
from hpmaxwell.fem.space import nedelec_space
from hpmaxwell.mesh import build_structured_cube_mesh
from hpmaxwell.study.runner import kuhn_entity_counts

BASE = "problem = exp2_smooth\nk = 10\np = 1\n"


def _rec(k=10.0, p=1, level=0, dofs=8000, err=0.5, **kw):
    nk = dofs ** (1 / 3) / abs(k)
    return RunRecord(k=complex(k), p=p, level=level, n=2**level, h=0.5**level, dofs=dofs, nk=nk, rel_err=err,
                     rel_err_hxik=err, **kw)


# --- configuration -------------------------------------------------------------------------


def test_defaults():
    cfg = parse_config(BASE)
    assert cfg.k == (10,) and cfg.p == (1,) and cfg.p_ref == 4 and cfg.family == "nedelec2"
    assert cfg.meshes(10, 1) == (2, 4, 8)
    assert cfg.reference_mesh(10) is None


def test_complex_forms():
    assert parse_complex("5/2") == 5 + 2j
    assert parse_complex("5+2i") == parse_complex("5+2j") == 5 + 2j
    cfg = parse_config("problem = exp2_smooth\nk = 10, 5/2, 3-1i\np = 1\n")
    assert cfg.k == (10, 5 + 2j, 3 - 1j)


def test_format_k():
    assert format_k(10) == "10" and format_k(5 + 2j) == "5+2i" and format_k(2.5 - 1j) == "2.5-1i"
    assert csv_name(1, 10) == "data_p1_k10.csv" and csv_name(2, 5 + 2j) == "data_p2_k5+2i.csv"


def test_qualified_overrides():
    cfg = parse_config(BASE.replace("k = 10", "k = 10, 20").replace("p = 1", "p = 1, 2") + (
        "levels = 3\nlevels[p=1] = 4\nlevels[k=10, p=1] = 2\nn0[k=20] = 3\nref_n[k=20] = 6\n"))
    assert cfg.meshes(10, 1) == (2, 4)
    assert cfg.meshes(20, 1) == (3, 6, 12, 24)
    assert cfg.meshes(20, 2) == (3, 6, 12)
    assert cfg.reference_mesh(20) == 6 and cfg.reference_mesh(10) is None


def test_comments_and_fractions():
    cfg = parse_config("# header\nproblem = exp1_interface  # trailing\nk = 10\np = 1\ninner_box = 1/3, 2/3\nn0 = 3\n")
    assert cfg.inner_box == pytest.approx((1 / 3, 2 / 3))


@pytest.mark.parametrize(
    "text,field",
    [
        (BASE + "p_ref = 1\n", "p_ref"),
        (BASE + "p_ref = 5\n", "p_ref"),
        ("problem = exp2_smooth\nk = 0.5\np = 1\n", "k"),
        ("problem = nothing\nk = 10\np = 1\n", "problem"),
        ("k = 10\np = 1\n", "problem"),
        (BASE + "levels = 0\n", "levels"),
        (BASE + "n0 = two\n", "n0"),
        (BASE + "bogus = 1\n", "bogus"),
        (BASE + "p = 2\n", "p"),
        (BASE + "ref_n = 3\n", "ref_n"),
        (BASE + "family = raviart\n", "family"),
        (BASE + "threads = 0\n", "threads"),
        (BASE + "diagnostics = maybe\n", "diagnostics"),
        (BASE + "p_ref[k=10] = 3\n", "p_ref"),
        (BASE + "levels[q=1] = 3\n", "levels"),
        ("problem = exp1_interface\nk = 10\np = 1\ninner_box = 0.3, 0.7\n", "inner_box"),
        (BASE + "just words\n", "line 4"),
    ],
)
def test_config_errors_name_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_type1_allows_order_zero():
    assert parse_config(BASE.replace("p = 1", "p = 0") + "family = nedelec1\n").p == (0,)


@given(n=st.integers(1, 12))
def test_entity_counts_match_mesh(n):
    if n > 6:
        e, f, t = kuhn_entity_counts(n)
        v = (n + 1) ** 3
        assert v - e + f - t == 1
        return
    m = build_structured_cube_mesh(n)
    assert kuhn_entity_counts(n) == (m.n_edges, m.n_faces, m.n_tets)


@pytest.mark.parametrize("family,p", [("nedelec1", 0), ("nedelec1", 2), ("nedelec2", 1), ("nedelec2", 4)])
def test_projected_dofs(family, p):
    assert projected_dofs(3, p, family) == nedelec_space(build_structured_cube_mesh(3), p, family).ndofs


def test_dof_cap_refuses(tmp_path):
    cfg = parse_config(BASE + "dof_cap = 1000\n")
    with pytest.raises(ConfigError) as info:
        run_study(cfg)
    assert info.value.field == "dof_cap"


# --- runner --------------------------------------------------------------------------------


def test_nk_example():
    assert _rec(k=20, dofs=8000).nk == pytest.approx(1.0)


def test_single_case_single_record():
    cfg = parse_config("problem = manufactured_linear\nk = 2\np = 1\nlevels = 1\nn0 = 1\n")
    recs = run_study(cfg)
    assert len(recs) == 1
    r = recs[0]
    assert r.rel_err <= 1e-8 and r.nk > 0 and math.isnan(r.quasiopt)


def test_exp2_small_study_shapes():
    cfg = parse_config(BASE + "n0 = 1\nlevels = 2\np_ref = 3\nref_n = 2\n")
    seen = []
    recs = run_study(cfg, progress=seen.append)
    assert seen == recs
    assert [(r.p, r.level, r.n) for r in recs] == [(1, 0, 1), (1, 1, 2)]
    assert recs[0].rel_err > recs[1].rel_err > 0
    assert all(r.quasiopt > 0 and r.delta_k > 0 for r in recs)


def test_same_mesh_reference_matches_protocol():
    cfg = parse_config(BASE + "n0 = 1\nlevels = 1\np_ref = 2\ndiagnostics = off\n")
    (r,) = run_study(cfg)
    assert 0 < r.rel_err < 1 and math.isnan(r.delta_k)


def test_study_deterministic():
    cfg = parse_config(BASE + "n0 = 1\nlevels = 2\np_ref = 2\nref_n = 2\n")
    a, b = run_study(cfg), run_study(cfg)
    assert [(r.rel_err, r.delta_k, r.quasiopt) for r in a] == [(r.rel_err, r.delta_k, r.quasiopt) for r in b]


def test_study_error_identifies_case(monkeypatch):
    import hpmaxwell.study.runner as runner
    from hpmaxwell.linalg import SingularSystemError

    def boom(*a, **k):
        raise SingularSystemError("zero pivot")

    monkeypatch.setattr(runner, "solve_on", boom)
    cfg = parse_config("problem = manufactured_linear\nk = 3\np = 2\nlevels = 1\nn0 = 1\n")
    with pytest.raises(StudyError, match="k=3, p=2, level=0"):
        run_study(cfg)


def test_fitted_slope_exact():
    recs = [_rec(level=j, err=3.0 * 0.5 ** (2 * j)) for j in range(4)]
    assert fitted_slope(recs) == pytest.approx(2.0)


def test_required_nk_interpolates():
    recs = [_rec(dofs=1000, err=0.4), _rec(dofs=8000, err=0.05, level=1)]
    # N_k 1 -> 2, error 0.4 -> 0.05: slope -3 in log-log, 0.1 reached at 2^(2/3)
    val, extrap = required_nk(recs, 0.1)
    assert not extrap and val == pytest.approx(2 ** (2 / 3))
    assert required_nk(recs, 0.5) == (pytest.approx(1.0), False)


def test_required_nk_extrapolates_and_flags():
    recs = [_rec(dofs=1000, err=0.8), _rec(dofs=8000, err=0.4, level=1)]
    val, extrap = required_nk(recs, 0.1)
    assert extrap and val == pytest.approx(8.0)
    stalled = [_rec(dofs=1000, err=0.8), _rec(dofs=8000, err=0.9, level=1)]
    assert required_nk(stalled, 0.1) == (math.inf, True)
    with pytest.raises(ValueError):
        required_nk(recs[:1], 0.1)


# --- CSV and plots -------------------------------------------------------------------------


def test_csv_layout(tmp_path):
    recs = [_rec(level=1, dofs=4000, err=0.2, quasiopt=1.5, delta_k=0.3, t_assemble=1.0, t_solve=2.0),
            _rec(level=0, dofs=500, err=0.6)]
    files = emit_csv(recs, tmp_path)
    assert [f.rsplit("/", 1)[1] for f in files] == ["data_p1_k10.csv"]
    lines = open(files[0]).read().splitlines()
    assert lines[0] == "# " + ",".join(CSV_COLUMNS)
    assert lines[1].startswith("500,") and lines[2].startswith("4000,")
    data = read_csv(files[0])
    assert data.shape == (2, 8)
    assert data[1, 1] == pytest.approx(4000 ** (1 / 3) / 10) and data[1, 2] == pytest.approx(0.2)
    assert data[1, 4] == 1.5 and data[1, 5] == 0.3 and data[1, 6] == 1.0 and np.isnan(data[0, 4])


def test_csv_groups_and_hides_timings(tmp_path):
    recs = [_rec(p=p, k=k, t_assemble=1.0) for p in (1, 2) for k in (10, 20, 5 + 2j)]
    files = emit_csv(recs, tmp_path, timings=False)
    assert len(files) == 6
    assert any(f.endswith("data_p2_k5+2i.csv") for f in files)
    assert np.isnan(read_csv(files[0])[0, 6])


def test_csv_empty_writes_nothing(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "x")
    assert not (tmp_path / "x").exists()


def test_csv_bytes_repeatable(tmp_path):
    recs = [_rec(level=j, err=0.5**j) for j in range(3)]
    a = open(emit_csv(recs, tmp_path / "a", timings=False)[0], "rb").read()
    b = open(emit_csv(recs, tmp_path / "b", timings=False)[0], "rb").read()
    assert a == b


def test_plot_contents(tmp_path):
    recs = [_rec(k=k, level=j, dofs=1000 * 8**j, err=0.5 * 0.5**j) for k in (10, 20) for j in range(3)]
    path = emit_plot(recs, tmp_path / "plot_p1.svg")
    text = open(path).read()
    assert text.startswith("<?xml") and "<svg" in text
    assert "DOFs per wavelength" in text and "rel. error" in text
    assert "k = 10" in text and "k = 20" in text
    assert open(emit_plot(recs, tmp_path / "again.svg")).read() == text


def test_plot_guide_slope(tmp_path, monkeypatch):
    import matplotlib.axes

    calls = []
    orig = matplotlib.axes.Axes.loglog

    def spy(self, *args, **kw):
        calls.append(args)
        return orig(self, *args, **kw)

    monkeypatch.setattr(matplotlib.axes.Axes, "loglog", spy)
    recs = [_rec(p=2, level=j, dofs=1000 * 8**j, err=0.5 * 0.3**j) for j in range(3)]
    emit_plot(recs, tmp_path / "p.svg")
    xs, ys = np.asarray(calls[-1][0]), np.asarray(calls[-1][1])
    assert calls[-1][2] == "k--"
    assert np.log(ys[1] / ys[0]) / np.log(xs[1] / xs[0]) == pytest.approx(-2.0)
    assert ys[-1] == pytest.approx(recs[-1].rel_err)


def test_plot_flat_and_skipped(tmp_path):
    flat = [_rec(level=j, dofs=1000 * 8**j, err=0.3) for j in range(3)]
    emit_plot(flat, tmp_path / "flat.svg")
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        emit_plot(flat + [_rec(k=20, err=0.5)], tmp_path / "skip.svg")
    assert any("fewer than two points" in str(x.message) for x in w)


def test_plot_single_order_only(tmp_path):
    with pytest.raises(ValueError):
        emit_plot([_rec(p=1), _rec(p=2)], tmp_path / "x.svg")
