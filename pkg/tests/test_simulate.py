import json

import numpy as np
import pytest
from scipy.stats import truncnorm

from feasible_cdrc import ConfigError, SimLaw, generate, make_grid, monte_carlo_bias, oracle_truth
from feasible_cdrc.simulate import LAW_IDS, oracle_curves


def test_generate_is_reproducible():
    for law in LAW_IDS:
        a, b = generate(law, 200, seed=3), generate(law, 200, seed=3)
        for x, y in ((a.confounders, b.confounders), (a.treatment, b.treatment), (a.outcome, b.outcome)):
            assert x.tobytes() == y.tobytes()
    assert not np.array_equal(generate("1A", 50, 1).treatment, generate("1A", 50, 2).treatment)


@pytest.mark.slow
def test_law2_confounder_probability():
    d = generate("2A", 1_000_000, seed=0)
    assert abs(d.confounders.mean() - 0.5) < 0.002


@pytest.mark.slow
def test_law1_correlation():
    d = generate("1A", 1_000_000, seed=0)
    r = np.corrcoef(d.treatment, d.confounders[:, 0])[0, 1]
    assert abs(r - 1 / np.sqrt(2)) < 0.01


def test_law3_truncation():
    for seed in range(3):
        d = generate("3", 5000, seed=seed)
        assert d.treatment.min() >= 0.2032
        assert set(np.unique(d.outcome)) <= {0.0, 1.0}
        assert d.q == 2


def test_generate_rejects_empty():
    with pytest.raises(ValueError):
        generate("1A", 0)


def test_truncated_pdf_matches_scipy():
    law = SimLaw("2B")
    a = np.linspace(-1, 9, 101)
    L = np.array([[0.0], [1.0]])
    got = law.conditional_pdf(a, L)
    for j, l in enumerate((0.0, 1.0)):
        mu = 2 + 2 * l
        ref = truncnorm.pdf(a, (0 - mu) / 0.5, (8 - mu) / 0.5, loc=mu, scale=0.5)
        np.testing.assert_allclose(got[:, j], ref, rtol=1e-10, atol=1e-300)


def test_law_parameters_and_json():
    law = SimLaw("2A", {"sd": 2.0})
    assert law.params["sd"] == 2.0 and law.params["p_L"] == 0.5
    doc = json.loads(law.to_json())
    assert doc["id"] == "2A" and doc["params"]["sd"] == 2.0
    with pytest.raises(ConfigError):
        SimLaw("4")
    with pytest.raises(ConfigError):
        SimLaw("1A", {"nope": 1})


def test_law2_standard_truth_is_closed_form():
    g = make_grid(1.5, 4.5, 31)
    truth = oracle_truth("2A", "standard", g, N=100_000, seed=0)
    # 1 + a + 0.5 E[L] with E[L] = 0.5; Monte Carlo error only through the mean of L
    np.testing.assert_allclose(truth, 1 + g.values + 0.25, atol=3 * 0.5 * 0.5 / np.sqrt(1e5))


def test_oracle_coincidence_where_true_tau_is_zero():
    g = make_grid(1.5, 4.5, 31)
    oc = oracle_curves("2A", g, N=20_000, seed=1)
    full = oc["tau"] == 0
    assert full.any()
    assert np.all(np.abs(oc["standard"][full] - oc["feasible"][full]) <= 3 / np.sqrt(20_000))


def test_oracle_trimming_undefined_below_truncation():
    g = make_grid(0, 6, 61)
    oc = oracle_curves("3", g, N=10_000, seed=0)
    below = g.values < 0.2032
    assert not oc["trimming_defined"][below].any()
    assert np.all(np.isnan(oc["trimming"][below]))
    assert np.all(oc["tau"][below] == 1)
    assert oc["trimming_defined"][~below].all()


def test_law2b_true_tau_at_extremes():
    law = SimLaw("2B")
    g = law.default_grid().build()
    tau = oracle_curves(law, g, N=20_000, seed=0)["tau"]
    assert 0.45 <= tau[0] <= 0.55 and 0.45 <= tau[-1] <= 0.55


def test_oracle_needs_large_N():
    with pytest.raises(ValueError):
        oracle_truth("1A", "standard", make_grid(0, 1, 3), N=100)


@pytest.mark.slow
@pytest.mark.parametrize("law", ["1B", "2B", "3"])
def test_oracle_self_consistency(law):
    g = SimLaw(law).default_grid().build()
    N = 100_000
    for kind in ("standard", "feasible", "trimming"):
        t1 = oracle_truth(law, kind, g, N=N, seed=0)
        t2 = oracle_truth(law, kind, g, N=2 * N, seed=0)
        ok = np.isfinite(t1) & np.isfinite(t2)
        assert np.array_equal(np.isfinite(t1), np.isfinite(t2))
        assert np.max(np.abs(t1[ok] - t2[ok])) < 5 / np.sqrt(N)


def test_bias_table_reproducible_and_thread_independent(tmp_path):
    kw = dict(R=6, n=200, seed=2, N=10_000)
    t1 = monte_carlo_bias("2B", **kw)
    t2 = monte_carlo_bias("2B", threads=3, **kw)
    for e in t1.abs_bias:
        assert t1.abs_bias[e].tobytes() == t2.abs_bias[e].tobytes()
        b = t1.abs_bias[e]
        assert np.all(b[np.isfinite(b)] >= 0)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    t1.to_csv(p1)
    t2.to_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()
    rows = p1.read_text().splitlines()
    assert rows[0] == "a,estimand,abs_bias,n_fail"
    assert len(rows) == 1 + 3 * t1.grid.m


def test_bias_table_undefined_where_truth_undefined():
    t = monte_carlo_bias("3", R=3, n=300, seed=0, N=10_000)
    below = t.grid.values < 0.2032
    assert np.all(np.isnan(t.abs_bias["trimming"][below]))
    assert np.all(np.isfinite(t.abs_bias["standard"]))


@pytest.mark.slow
def test_law1b_feasible_beats_standard_in_low_support_region():
    t = monte_carlo_bias("1B", R=100, n=1000, seed=0)
    high = t.truths["tau"] > 0.5
    f, s = t.abs_bias["feasible"][high], t.abs_bias["standard"][high]
    assert np.mean(f <= s) >= 0.8
