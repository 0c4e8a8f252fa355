"""Empirical CDFs, closed-form inner products, and centered Gram matrices."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import direct_inner_product

from cdfdyn.ecdf import (
    CenteredGram,
    CyclePanel,
    EmpiricalCdf,
    ecdf_eval,
    inner_product,
    mean_inner_products,
    pairwise_raw_gram,
    panel_cdf_matrix,
    signed_combo_moment,
)
from cdfdyn.exceptions import DataError
from cdfdyn.measure import Laplace, LebesgueInterval, total_mass

LEB = LebesgueInterval(-1.0, 1.0)


def _cdf(values):
    return EmpiricalCdf.from_samples(values)


def _random_cycles(rng, n_cycles, max_q=40):
    cycles = []
    for _ in range(n_cycles):
        q = int(rng.integers(1, max_q + 1))
        vals = rng.normal(scale=rng.uniform(0.3, 2.0), size=q)
        if rng.random() < 0.4:
            vals = np.round(vals, 1)  # force ties
        cycles.append(np.sort(vals))
    return cycles


def test_ecdf_eval_examples():
    assert ecdf_eval(_cdf([0.0]), 0.0) == 1.0
    assert ecdf_eval(_cdf([-1.0, 1.0]), 0.0) == 0.5
    assert ecdf_eval(_cdf([1.0, 2.0, 3.0]), 0.99) == 0.0


def test_ecdf_eval_scalar_and_vector():
    cdf = _cdf([1.0, 2.0])
    assert isinstance(ecdf_eval(cdf, 1.5), float)
    np.testing.assert_array_equal(ecdf_eval(cdf, np.array([0.0, 1.0, 2.5])), [0.0, 0.5, 1.0])


def test_from_samples_sorts_and_validates():
    np.testing.assert_array_equal(_cdf([3.0, 1.0, 2.0]).samples, [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        _cdf([])
    with pytest.raises(DataError):
        _cdf([np.nan])


def test_inner_product_examples():
    assert inner_product(_cdf([0.0]), _cdf([0.0]), LEB) == pytest.approx(1.0, abs=1e-15)
    assert inner_product(_cdf([-0.5]), _cdf([0.5]), LEB) == pytest.approx(0.5, abs=1e-15)
    assert inner_product(_cdf([0.0]), _cdf([0.0]), Laplace(0.0, 1.0)) == pytest.approx(0.5, abs=1e-15)


def test_inner_product_matches_direct_double_sum():
    # the merge walks the union of atoms once; the direct oracle sums tail
    # masses over all sample pairs
    rng = np.random.default_rng(42)
    measures = (LEB, Laplace(0.2, 0.7), LebesgueInterval(-0.5, 2.5))
    for case in range(200):
        f = _cdf(_random_cycles(rng, 1)[0])
        g = _cdf(_random_cycles(rng, 1)[0])
        m = measures[case % len(measures)]
        got = inner_product(f, g, m)
        want = direct_inner_product(f, g, m)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_inner_product_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(20):
        f = _cdf(rng.normal(size=9))
        g = _cdf(rng.normal(size=13))
        assert inner_product(f, g, LEB) == pytest.approx(inner_product(g, f, LEB), rel=1e-14)


def test_centered_gram_hand_case():
    panel = CyclePanel.from_values([[-0.5], [0.5]])
    gram = mean_inner_products(panel, LEB)
    np.testing.assert_allclose(gram.raw, [[1.5, 0.5], [0.5, 0.5]], atol=1e-12)
    np.testing.assert_allclose(gram.entries, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-12)


def test_identical_cycles_center_to_exact_zero():
    panel = CyclePanel.from_values([[0.3], [0.3], [0.3]])
    gram = mean_inner_products(panel, LEB)
    assert np.all(gram.entries == 0.0)


def test_pooled_and_pairwise_paths_agree():
    rng = np.random.default_rng(3)
    for m in (LEB, Laplace(0.0, 1.0)):
        panel = CyclePanel(_random_cycles(rng, 12))
        pooled = mean_inner_products(panel, m)
        pairwise = CenteredGram.from_raw(pairwise_raw_gram(panel, m))
        np.testing.assert_allclose(pooled.entries, pairwise.entries, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(pooled.raw, pairwise.raw, rtol=1e-9, atol=1e-12)


def test_mean_inner_products_chunk_independent():
    rng = np.random.default_rng(5)
    panel = CyclePanel(_random_cycles(rng, 8))
    a = mean_inner_products(panel, LEB)
    b = mean_inner_products(panel, LEB, chunk=7)
    np.testing.assert_allclose(a.entries, b.entries, rtol=1e-10, atol=1e-13)


def test_centered_gram_psd_symmetric_rows_centered():
    rng = np.random.default_rng(11)
    for case in range(100):
        n = int(rng.integers(3, 12))
        m = LEB if case % 2 == 0 else Laplace(0.1, 1.3)
        panel = CyclePanel(_random_cycles(rng, n, max_q=20))
        gram = mean_inner_products(panel, m)
        entries = gram.entries
        np.testing.assert_array_equal(entries, entries.T)
        eigs = np.linalg.eigvalsh(entries)
        assert eigs.min() >= -1e-9 * max(np.trace(entries), 1e-30)
        assert np.max(np.abs(entries.sum(axis=0))) <= 1e-9 * n


def test_pairwise_entries_depend_only_on_their_cycles():
    rng = np.random.default_rng(13)
    cycles = _random_cycles(rng, 6)
    altered = list(cycles)
    altered[5] = np.sort(rng.normal(size=17) + 50.0)
    a = pairwise_raw_gram(CyclePanel(cycles), LEB)
    b = pairwise_raw_gram(CyclePanel(altered), LEB)
    # bit-exact: entry (t, s) is computed from cycles t and s alone
    np.testing.assert_array_equal(a[:5, :5], b[:5, :5])
    assert not np.array_equal(a[5], b[5])


def test_pairwise_matches_inner_product():
    rng = np.random.default_rng(17)
    panel = CyclePanel(_random_cycles(rng, 5))
    raw = pairwise_raw_gram(panel, LEB)
    for t in range(5):
        for s in range(5):
            want = inner_product(_cdf(panel.cycles[t]), _cdf(panel.cycles[s]), LEB)
            assert raw[t, s] == want


def test_signed_combo_moment_examples():
    panel = CyclePanel.from_values([[-1.0, 1.0], [5.0]])
    assert signed_combo_moment(panel, (1.0, 0.0), 2) == pytest.approx(1.0, abs=1e-15)
    assert signed_combo_moment(panel, (1.0, 0.0), 1) == pytest.approx(0.0, abs=1e-15)
    panel2 = CyclePanel.from_values([[1.0], [3.0]])
    assert signed_combo_moment(panel2, (0.5, 0.5), 1) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(DataError):
        signed_combo_moment(panel2, (1.0, 0.0, 0.0), 1)


def test_cycle_panel_validation():
    with pytest.raises(DataError):
        CyclePanel([np.array([1.0])])
    with pytest.raises(DataError):
        CyclePanel([np.array([2.0, 1.0]), np.array([0.0])])
    panel = CyclePanel.from_values([[1.0], [2.0], [3.0]])
    assert panel.head(2).n == 2
    np.testing.assert_array_equal(panel.sizes, [1, 1, 1])


def test_panel_cdf_matrix_rows():
    panel = CyclePanel.from_values([[0.0, 1.0], [2.0]])
    x = np.array([-0.5, 0.0, 1.5, 2.0])
    mat = panel_cdf_matrix(panel, x)
    np.testing.assert_array_equal(mat[0], ecdf_eval(_cdf([0.0, 1.0]), x))
    np.testing.assert_array_equal(mat[1], ecdf_eval(_cdf([2.0]), x))


_sorted_floats = st.lists(
    st.floats(-100, 100, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=25,
).map(sorted)


@settings(deadline=None)
@given(xs=_sorted_floats, zs=st.lists(st.floats(-200, 200), min_size=1, max_size=10))
def test_ecdf_eval_is_a_cdf(xs, zs):
    cdf = _cdf(xs)
    vals = ecdf_eval(cdf, np.sort(np.asarray(zs, dtype=float)))
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    assert np.all(np.diff(vals) >= 0.0)


@settings(deadline=None)
@given(xs=_sorted_floats, ys=_sorted_floats)
def test_inner_product_bounds(xs, ys):
    f, g = _cdf(xs), _cdf(ys)
    for m in (LEB, Laplace(0.0, 2.0)):
        val = inner_product(f, g, m)
        assert -1e-12 <= val <= total_mass(m) + 1e-12
