import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsdcheck.consistency import (CONSISTENT, INCONSISTENT, PValueSeries, build_ppplot,
                                  classify_experiment, ecdf, exceedances, experiment_test,
                                  plot_svg, read_plot_csv, render_plot, threshold_line,
                                  write_plot_csv, z_quantile)


def series(ps):
    return PValueSeries.from_pairs((f"s{i:04d}", p) for i, p in enumerate(ps))


def test_ecdf_examples():
    s = series([0.1, 0.2, 0.2, 0.9])
    assert ecdf(s, 0.0) == 0.0
    assert ecdf(s, 0.1) == 0.25
    assert ecdf(s, 0.2) == 0.75
    assert ecdf(s, 0.5) == 0.75
    assert ecdf(s, 1.0) == 1.0


def test_ecdf_domain():
    with pytest.raises(ValueError):
        ecdf(series([0.5]), 1.5)


def test_series_validation():
    with pytest.raises(ValueError):
        series([])
    with pytest.raises(ValueError):
        series([0.5, 1.2])
    with pytest.raises(ValueError):
        series([math.nan])
    with pytest.raises(ValueError):
        PValueSeries(("a",), np.array([0.1, 0.2]))


def test_threshold_values():
    assert threshold_line(0.2, 160) == pytest.approx(0.25186, abs=1e-5)
    # independent evaluation of a + z sqrt(a (1 - a) / n)
    assert threshold_line(0.5, 10) == pytest.approx(0.5 + 1.64 * math.sqrt(0.025), abs=1e-12)
    assert threshold_line(0.5, 10) == pytest.approx(0.7593, abs=1e-4)
    assert threshold_line(0.0, 160) == 0.0
    assert threshold_line(1.0, 160) == 1.0
    with pytest.raises(ValueError):
        threshold_line(-0.1, 10)
    with pytest.raises(ValueError):
        threshold_line(0.5, 0)


def test_z_quantile():
    assert z_quantile() == 1.64
    assert z_quantile(exact=True) == pytest.approx(1.6448536, abs=1e-6)


def test_threshold_above_diagonal():
    a = np.linspace(0, 1, 101)
    f = threshold_line(a, 50)
    assert np.all(f >= a)
    assert np.all(f[1:-1] > a[1:-1])


def test_uniform_ecdf_close_to_diagonal():
    ps = np.random.default_rng(0).uniform(size=10_000)
    s = series(ps)
    grid = np.linspace(0, 1, 201)
    assert max(abs(ecdf(s, a) - a) for a in grid) < 0.03


def test_all_ones_single_point_consistent():
    s = series([1.0] * 30)
    data = build_ppplot(s)
    np.testing.assert_array_equal(data.points, [[1.0, 1.0]])
    verdict = classify_experiment(s)
    assert verdict.decision == CONSISTENT
    assert verdict.flagged == []


def test_many_small_pvalues_exceed():
    ps = [0.01] * 30 + [0.6] * 70
    s = series(ps)
    data = build_ppplot(s)
    first = data.points[0]
    assert first[0] == 0.01 and first[1] == 0.3
    assert first[1] > threshold_line(0.01, 100)
    verdict = classify_experiment(s)
    assert verdict.inconsistent


def test_ppplot_threshold_curve():
    data = build_ppplot(series([0.3, 0.7]))
    assert data.threshold.shape == (512, 2)
    np.testing.assert_array_equal(data.threshold[0], [0.0, 0.0])
    assert np.all(data.threshold[:, 1] >= data.threshold[:, 0])


def test_experiment_test_examples():
    # exactly alpha-share of p-values at or below alpha gives z = 0
    s = series([0.1] * 32 + [0.9] * 128)
    assert experiment_test(s, 0.2) == pytest.approx(0.5)
    s = series([0.1] * 50 + [0.9] * 110)
    assert experiment_test(s, 0.2) == pytest.approx(1.9e-4, abs=0.5e-4)
    with pytest.raises(ValueError):
        experiment_test(s, 0.2, method="other")


def test_experiment_test_normal_matches_binomial_for_large_n():
    # the normal approximation needs n in the thousands to be within 0.01
    # of the exact binomial tail at alpha = 0.2
    n = 2000
    for count in range(300, 501, 5):
        s = series([0.1] * count + [0.9] * (n - count))
        assert abs(experiment_test(s, 0.2) - experiment_test(s, 0.2, "binomial")) < 0.01


def test_cap_rule_flags_below_crossing():
    ps = [0.001, 0.002, 0.004] + [0.05] * 40 + list(np.linspace(0.3, 1, 117))
    s = series(ps)
    v = classify_experiment(s)
    assert v.inconsistent
    assert v.crossing_alpha is not None and v.crossing_alpha <= 0.2
    expected = [sid for sid, p in sorted(s.entries, key=lambda e: e[1]) if p < v.crossing_alpha]
    assert v.flagged == expected
    assert v.to_dict()["decision"] == INCONSISTENT


def test_rules_differ_on_single_tiny_pvalue():
    # one tiny p-value among otherwise uniform ones crosses the threshold
    # near alpha = 0 but not at the cap
    ps = [1e-4] + list(np.linspace(0.01, 1, 159))
    s = series(ps)
    assert classify_experiment(s, rule="cap_test").decision == CONSISTENT
    loose = classify_experiment(s, rule="any_exceedance")
    assert loose.inconsistent
    # the crossing is the tiny p-value itself and flagging is strict
    assert loose.crossing_alpha == 1e-4
    assert loose.flagged == []
    assert classify_experiment(s).exceedance_alpha == 1e-4


def test_zero_pvalues_handled():
    ps = [0.0, 0.0] + list(np.linspace(0.02, 1, 60))
    s = series(ps)
    assert exceedances(s)[0] == 0.0
    v = classify_experiment(s, rule="any_exceedance")
    assert v.inconsistent
    assert set(v.flagged) >= {"s0000", "s0001"}


def test_crossing_capped_when_exceedances_beyond_cap():
    ps = list(np.linspace(0.001, 0.5, 100)) + [1.0] * 10
    s = series(ps)
    v = classify_experiment(s)
    assert v.inconsistent
    assert exceedances(s).max() > 0.2
    assert v.crossing_alpha == 0.2


def test_classify_validation():
    s = series([0.5])
    with pytest.raises(ValueError):
        classify_experiment(s, alpha_cap=0.0)
    with pytest.raises(ValueError):
        classify_experiment(s, rule="nope")


def test_verdict_independent_of_order():
    ps = np.random.default_rng(1).beta(0.4, 1, size=80)
    s = series(ps)
    perm = np.random.default_rng(2).permutation(80)
    shuffled = PValueSeries(tuple(s.stimulus_ids[i] for i in perm), s.p_values[perm])
    assert classify_experiment(s) == classify_experiment(shuffled)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=60), st.floats(0.0, 0.2))
def test_lowering_pvalues_never_helps(ps, shift):
    # making p-values smaller can only move the ECDF up
    s = series(ps)
    lower = series([max(0.0, p - shift) for p in ps])
    if classify_experiment(s).inconsistent:
        assert classify_experiment(lower).inconsistent
    for a in (0.05, 0.1, 0.2):
        assert ecdf(lower, a) >= ecdf(s, a)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60))
def test_flagged_are_below_crossing(ps):
    s = series(ps)
    v = classify_experiment(s, rule="any_exceedance")
    if v.inconsistent:
        p = dict(s.entries)
        assert all(p[sid] < v.crossing_alpha for sid in v.flagged)
        assert [p[sid] for sid in v.flagged] == sorted(p[sid] for sid in v.flagged)
    else:
        assert v.flagged == [] and v.crossing_alpha is None


def test_plot_csv_round_trip(tmp_path):
    data = build_ppplot(series([0.05, 0.1, 0.1, 0.7]))
    path = tmp_path / "pp.csv"
    write_plot_csv(data, path)
    table = read_plot_csv(path)
    np.testing.assert_array_equal(table[:, :2], data.points)
    np.testing.assert_array_equal(table[:, 2], data.point_thresholds())


def test_svg_is_well_formed(tmp_path):
    data = build_ppplot(series([0.05, 0.1, 0.4, 0.7]))
    root = ET.fromstring(plot_svg(data, title="demo"))
    assert root.tag.endswith("svg")
    path = render_plot(data, tmp_path / "pp.svg", "svg", title="demo")
    ET.parse(path)
    with pytest.raises(ValueError):
        render_plot(data, tmp_path / "pp.png", "png")
