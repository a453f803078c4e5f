import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feasible_cdrc import (
    Basis,
    BootstrapSpec,
    Dataset,
    DensityMatrix,
    DensitySpec,
    GridSpec,
    OutcomeModel,
    ReplicateFailureError,
    RunConfig,
    assign_interventions,
    bootstrap_curves,
    generate,
    hdr_thresholds,
    make_grid,
    plugin_curves,
    run_pipeline,
)
from feasible_cdrc.estimands import map_ordered, undefined_regions
from feasible_cdrc.simulate import get_law

from .oracles import brute_curves


def _linear_model(coef, family="gaussian", q=1):
    return OutcomeModel(family, Basis("linear"), np.asarray(coef, float), 0.0, 1, q)


def _two_unit_case(sup):
    g = make_grid(1, 4, 4)
    d = Dataset([[0.0], [1.0]], [2.0, 3.0], [0.0, 0.0])
    dm = DensityMatrix(np.where(sup, 1.0, 1e-6), g)
    prof = hdr_thresholds(dm, 0.999)
    np.testing.assert_array_equal(prof.supported, sup)
    return d, g, dm, prof


def test_hand_example_full_support():
    d, g, dm, prof = _two_unit_case(np.ones((4, 2), bool))
    c = plugin_curves(d, g, dm, prof, _linear_model([0, 1, 1]))
    i = 1  # a = 2
    assert c.standard[i] == c.feasible[i] == c.trimming[i] == 2.5


def test_hand_example_one_unit_unsupported():
    sup = np.array([[True, False], [True, False], [True, True], [True, True]])
    d, g, dm, prof = _two_unit_case(sup)
    c = plugin_curves(d, g, dm, prof, _linear_model([0, 1, 1]))
    assert c.standard[1] == 2.5
    assert c.feasible[1] == 3.0
    assert c.trimming[1] == 2.0
    assert c.tau.tau[1] == 0.5


def test_constant_outcome_model():
    d = generate("2B", 200, seed=1)
    cfg = RunConfig(density=DensitySpec("kernel"), grid=GridSpec(0, 8, 41))
    res = run_pipeline(d, cfg)
    const = _linear_model([4.25, 0, 0])
    c = plugin_curves(d, res.profile.grid, res.density, res.profile, const, weighted_cutoff=None)
    assert np.all(c.standard == 4.25) and np.all(c.feasible == 4.25)
    assert np.all(c.trimming[c.trimming_defined] == 4.25)


def test_trimming_undefined_exactly_where_tau_is_one():
    g = make_grid(0, 3, 4)
    sup = np.array([[False, False], [True, False], [True, True], [False, True]])
    d = Dataset([[0.0], [1.0]], [1.0, 2.0], [0.0, 0.0])
    dm = DensityMatrix(np.where(sup, 1.0, 1e-6), g)
    prof = hdr_thresholds(dm, 0.999)
    c = plugin_curves(d, g, dm, prof, _linear_model([0, 1, 1]))
    np.testing.assert_array_equal(c.trimming_defined, c.tau.tau < 1)
    assert np.isnan(c.trimming[0]) and not c.trimming_defined[0]
    assert undefined_regions(g, c.trimming_defined) == [(0.0, 0.0, 1)]


def test_dimension_mismatch():
    d, g, dm, prof = _two_unit_case(np.ones((4, 2), bool))
    with pytest.raises(ValueError):
        plugin_curves(d.subset([0]), g, dm, prof, _linear_model([0, 1, 1]))
    with pytest.raises(ValueError):
        plugin_curves(d, g, dm, prof, _linear_model([0, 1, 1, 1], q=2))


@pytest.mark.parametrize("law,n", [("1A", 20), ("1B", 20), ("2A", 400), ("2B", 400), ("3", 400)])
def test_coincidence_at_full_support(law, n):
    d = generate(law, n, seed=11)
    res = run_pipeline(d, get_law(law).default_config().with_(support_levels=(0.99,)))
    c = res.curves
    full = c.tau.tau == 0
    assert full.any()
    assert np.all(c.standard[full] == c.feasible[full])
    assert np.all(c.standard[full] == c.trimming[full])


def test_weighted_with_zero_cutoff_is_standard():
    d = generate("1A", 300, seed=2)
    cfg = RunConfig(weighted_cutoff=0.0, grid=GridSpec(-2, 2, 21))
    c = run_pipeline(d, cfg).curves
    np.testing.assert_array_equal(c.weighted, c.standard)


def test_trimming_weights_average_to_one():
    d = generate("2B", 300, seed=3)
    res = run_pipeline(d, RunConfig(density=DensitySpec("kernel"), grid=GridSpec(0, 8, 33)))
    sup = res.profile.supported
    tau = res.curves.tau.tau
    defined = res.curves.trimming_defined
    t = sup[defined] / (1 - tau[defined])[:, None]
    np.testing.assert_allclose(t.mean(axis=1), 1.0, rtol=1e-12)


def test_binomial_curves_in_unit_interval_and_feasible_range():
    d = generate("3", 500, seed=4)
    cfg = get_law("3").default_config().with_(weighted_cutoff=0.05)
    res = run_pipeline(d, cfg)
    c = res.curves
    for name in c.available():
        v = c.curve(name)
        v = v[np.isfinite(v)]
        assert np.all((v >= 0) & (v <= 1))
    # every substituted value sits inside the unit's HDR span
    prof = res.profile
    g = prof.grid.values
    for i in range(0, prof.m, 7):
        out = assign_interventions(g[i], prof)
        for j in range(prof.n):
            s = g[prof.supported[:, j]]
            assert s.min() <= out[j] <= s.max() or out[j] == g[i]


def test_curve_csv_layout(tmp_path):
    d = generate("2A", 200, seed=1)
    cfg = RunConfig(density=DensitySpec("kernel"), grid=GridSpec(-1, 8, 10), weighted_cutoff=0.01)
    c = run_pipeline(d, cfg).curves
    p = tmp_path / "c.csv"
    c.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["a", "tau", "m_standard", "m_feasible", "m_trimming", "m_weighted"]
    undefined = [r for r, ok in zip(rows[1:], c.trimming_defined) if not ok]
    assert undefined and all(r[4] == "" for r in undefined)
    boot = bootstrap_curves(d, cfg, B=5, seed=0)
    c.with_bands(boot.bands).to_csv(p)
    header = next(csv.reader(open(p)))
    assert header[6:] == ["m_standard_lo", "m_standard_hi", "m_feasible_lo", "m_feasible_hi",
                          "m_trimming_lo", "m_trimming_hi", "m_weighted_lo", "m_weighted_hi"]


def test_bootstrap_deterministic_and_thread_independent():
    d = generate("2A", 150, seed=5)
    cfg = RunConfig(density=DensitySpec("kernel"), grid=GridSpec(1.5, 4.5, 7))
    b1 = bootstrap_curves(d, cfg, B=8, seed=3)
    b2 = bootstrap_curves(d, cfg, B=8, seed=3, threads=4)
    for c in b1.bands:
        for x, y in zip(b1.bands[c], b2.bands[c]):
            assert x.tobytes() == y.tobytes()
    # replicate b draws from default_rng(seed + b)
    b3 = bootstrap_curves(d, cfg, B=8, seed=4)
    np.testing.assert_array_equal(b3.replicates["standard"][:-1], b1.replicates["standard"][1:])


def test_bootstrap_split_and_bands_bracket():
    d = generate("2A", 300, seed=6)
    cfg = RunConfig(density=DensitySpec("kernel"), grid=GridSpec(1.5, 4.5, 7),
                    bootstrap=BootstrapSpec(20, 1, True))
    b = bootstrap_curves(d, cfg)
    assert b.split and b.B == 20
    lo, hi = b.bands["standard"]
    assert np.all(lo <= hi)
    assert b.replicates["standard"].shape == (20, 7)


def test_bootstrap_requires_positive_B():
    d = generate("1A", 50, seed=0)
    with pytest.raises(ValueError):
        bootstrap_curves(d, RunConfig(), B=0)


def test_bootstrap_failures_abort():
    # two distinct treatment values: most resamples of 12 rows collapse the hazard binning
    rng = np.random.default_rng(0)
    A = np.r_[np.zeros(11), 1.0]
    d = Dataset(rng.standard_normal((12, 1)), A, rng.standard_normal(12))
    cfg = RunConfig(density=DensitySpec("hazard", {"bins": 2}), grid=GridSpec(0, 1, 3))
    with pytest.raises(ReplicateFailureError) as exc:
        bootstrap_curves(d, cfg, B=20, seed=0)
    assert exc.value.failed


def test_map_ordered_keeps_order():
    assert map_ordered(lambda x: x * x, range(10), threads=3) == [x * x for x in range(10)]


# -- small-instance brute force -------------------------------------------


@st.composite
def tiny_instances(draw):
    n = draw(st.integers(1, 5))
    m = draw(st.integers(2, 5))
    q = draw(st.integers(1, 2))
    fl = st.floats(-3, 3, allow_nan=False)
    L = np.array(draw(st.lists(st.lists(fl, min_size=q, max_size=q), min_size=n, max_size=n)))
    dens = np.array(draw(st.lists(st.lists(st.floats(0.01, 5), min_size=n, max_size=n),
                                  min_size=m, max_size=m)))
    coef = np.array(draw(st.lists(fl, min_size=2 + q, max_size=2 + q)))
    family = draw(st.sampled_from(["gaussian", "binomial"]))
    alpha = draw(st.floats(0.3, 0.99))
    cutoff = draw(st.floats(0, 3))
    lo = draw(st.floats(-2, 2))
    return n, m, q, L, dens, coef, family, alpha, cutoff, lo


def check_tiny_instance(n, m, q, L, dens, coef, family, alpha, cutoff, lo):
    g = make_grid(lo, lo + 1.5, m)
    d = Dataset(L, np.zeros(n), np.zeros(n))
    om = OutcomeModel(family, Basis("linear"), coef, 0.0, 1, q)

    def pred(a, l):
        eta = coef[0] + coef[1] * a + sum(coef[2 + k] * l[k] for k in range(q))
        return eta if family == "gaussian" else 1 / (1 + np.exp(-eta))

    dm = DensityMatrix(dens, g)
    c = plugin_curves(d, g, dm, hdr_thresholds(dm, alpha), om, cutoff)
    ref = brute_curves(list(g.values), list(g.cell_widths), dens.tolist(), L.tolist(), pred,
                       alpha, cutoff)
    for name in ("standard", "feasible", "trimming", "weighted"):
        np.testing.assert_allclose(c.curve(name), ref[name], rtol=0, atol=1e-12, equal_nan=True)
    np.testing.assert_allclose(c.tau.tau, ref["tau"], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(tiny_instances())
def test_tiny_instances_match_brute_force(inst):
    check_tiny_instance(*inst)
