import math

import numpy as np
import pytest
from scipy.stats import chisquare, ks_2samp

from sweepsim import _kernels, lm
from sweepsim.core import RngStream, SweepParams
from sweepsim.errors import AbsorbedState, DomainError


def test_init_marks_single_founder(asym2, rng):
    sp = SweepParams(alpha=3.0, mu=1.0, founder=1)
    for _ in range(50):
        st = lm.lm_init(asym2, sp, rng)
        assert st.m.sum() == 1 and st.m[1] == 1
        assert np.all(st.m <= st.ell)


def test_init_mean_counts(asym2, rng):
    sp = SweepParams(alpha=3.0, mu=1.0, founder=0)
    n = 20000
    ells = np.array([lm.lm_init(asym2, sp, rng).ell for _ in range(n)])
    expect = 2.0 * sp.alpha * asym2.rho + np.array([1.0, 0.0])
    se = np.sqrt(2.0 * sp.alpha * asym2.rho / n)
    assert np.all(np.abs(ells.mean(axis=0) - expect) < 3.0 * se)


def test_rate_table_hand_example(one_colony):
    # two particles, one marked, rho=1: rates (alpha, alpha, 0, 1, 0, 0)
    sp = SweepParams(alpha=7.0, mu=0.0)
    st = lm.LMState(ell=[2], m=[1])
    rates = lm.lm_rate_table(st, one_colony, sp)
    np.testing.assert_allclose(rates[0], [7.0, 7.0, 0.0, 1.0, 0.0, 0.0])
    assert rates.sum() == pytest.approx(2 * 7.0 + 1.0)


def test_absorbing_state_raises(asym2, rng):
    sp = SweepParams(alpha=2.0, mu=1.0)
    st = lm.LMState(ell=[2, 1], m=[2, 1])
    assert st.absorbed
    with pytest.raises(AbsorbedState):
        lm.lm_step(st, asym2, sp, rng)


def test_absorbed_states_have_no_escaping_rates(asym2, rng):
    # every category that would break m == ell carries zero rate
    sp = SweepParams(alpha=2.0, mu=1.0)
    gen = rng.generator
    for _ in range(1000):
        ell = gen.integers(0, 6, size=2)
        if ell.sum() == 0:
            ell[0] = 1
        st = lm.LMState(ell=ell, m=ell.copy())
        rates = lm.lm_rate_table(st, asym2, sp)
        assert np.all(rates[:, [1, 3, 5]] == 0.0)


def test_m_never_exceeds_ell(asym2, rng):
    sp = SweepParams(alpha=4.0, mu=2.0, founder=0)
    st = lm.lm_init(asym2, sp, rng)
    for _ in range(3000):
        if st.absorbed:
            st = lm.lm_init(asym2, sp, rng)
        st = lm.lm_step(st, asym2, sp, rng)
        assert np.all(st.m <= st.ell) and np.all(st.m >= 0)
        assert st.ell.sum() >= 1


def _classify_delta(d_ell, d_m, founder_dim):
    """Map a one-event count change to (colony, category[, dest])."""
    pos = np.nonzero(d_ell > 0)[0]
    neg = np.nonzero(d_ell < 0)[0]
    if len(pos) == 1 and len(neg) == 0:
        i = pos[0]
        return (i, 0) if d_m[i] == 1 else (i, 1)
    if len(neg) == 1 and len(pos) == 0:
        i = neg[0]
        return (i, 2) if d_m[i] == -1 else (i, 3)
    i, j = neg[0], pos[0]
    return (i, 4, j) if d_m[i] == -1 else (i, 5, j)


def test_kernel_event_frequencies_match_rates(asym2, rng):
    """Chi-square on single kernel events from a fixed state against the
    analytic rate table (destinations resolved per forward kernel row)."""
    sp = SweepParams(alpha=1.5, mu=0.8, founder=0)
    state = lm.LMState(ell=np.array([4, 3]), m=np.array([2, 1]))
    rates = lm.lm_rate_table(state, asym2, sp)
    arow = asym2.a.sum(axis=1)

    expected = {}
    for i in range(2):
        for cat in range(4):
            if rates[i, cat] > 0:
                expected[(i, cat)] = rates[i, cat]
        for cat in (4, 5):
            for j in range(2):
                if i != j and asym2.a[i, j] > 0 and rates[i, cat] > 0:
                    expected[(i, cat, j)] = rates[i, cat] * asym2.a[i, j] / arow[i]

    n = 30000
    seeds = rng.kernel_seeds(n)
    out_ell = np.empty(2, dtype=np.int64)
    out_m = np.empty(2, dtype=np.int64)
    counts = {key: 0 for key in expected}
    for s in seeds:
        status, *_ = _kernels.lm_run(
            sp.alpha, sp.mu, asym2.a, asym2.rho, 0,
            state.ell, state.m, True, -1.0, False, 1, 10 ** 6, s, out_ell, out_m,
        )
        key = _classify_delta(out_ell - state.ell, out_m - state.m, 2)
        counts[key] += 1

    keys = sorted(expected)
    obs = np.array([counts[k] for k in keys], dtype=float)
    exp = np.array([expected[k] for k in keys])
    exp = exp / exp.sum() * n
    assert chisquare(obs, exp).pvalue > 1e-4


def test_python_step_event_frequencies(asym2, rng):
    sp = SweepParams(alpha=1.5, mu=0.8, founder=0)
    base = lm.LMState(ell=np.array([4, 3]), m=np.array([2, 1]))
    rates = lm.lm_rate_table(base, asym2, sp)
    n = 20000
    obs = np.zeros((2, lm.N_CATEGORIES))
    for _ in range(n):
        nxt = lm.lm_step(base, asym2, sp, rng)
        key = _classify_delta(nxt.ell - base.ell, nxt.m - base.m, 2)
        obs[key[0], key[1]] += 1
    mask = rates > 0
    exp = rates[mask] / rates.sum() * n
    assert chisquare(obs[mask], exp).pvalue > 1e-4


def test_kernel_vs_python_hitting_time_distribution(sym2):
    """The jitted kernel and the pure-python step must produce the same
    hitting-time law (they share nothing but the rate table)."""
    sp = SweepParams(alpha=6.0, mu=1.0, founder=0)
    rng = RngStream(seed=99)
    res = lm.lm_hitting_times(sym2, sp, 400, rng)

    py = []
    for _ in range(400):
        st = lm.lm_init(sym2, sp, rng)
        while not st.absorbed:
            st = lm.lm_step(st, sym2, sp, rng)
        py.append(st.t)
    assert ks_2samp(res.T, np.asarray(py)).pvalue > 1e-3


def test_first_migrant_mu_zero_never(sym2, rng):
    sp = SweepParams(alpha=30.0, mu=0.0, founder=0)
    times = lm.first_successful_migrant_times(sym2, sp, 64, rng)
    assert np.all(np.isinf(times))


def test_first_migrant_needs_two_colonies(one_colony, rng):
    with pytest.raises(DomainError):
        lm.first_successful_migrant_times(one_colony, SweepParams(alpha=10.0), 4, rng)


def test_first_migrant_tracks_inverse_rate_trend(sym2, rng):
    """Median first-migrant time moves monotonically with
    log(1 + alpha/mu)/alpha across gamma in {0.25, 0.5, 0.75}."""
    alpha = 1000.0
    medians = []
    predictions = []
    for gamma in (0.25, 0.5, 0.75):
        mu = alpha ** gamma
        sp = SweepParams(alpha=alpha, mu=mu, founder=0)
        fm = lm.first_successful_migrant_times(sym2, sp, 400, rng)
        medians.append(float(np.median(fm)))
        predictions.append(math.log(1.0 + alpha / mu) / alpha)
    assert medians[0] > medians[1] > medians[2]
    assert predictions[0] > predictions[1] > predictions[2]
    for med, pred in zip(medians, predictions):
        assert 0.3 * pred < med < 3.0 * pred


def _band_probability_exact(alpha: float, lo: float, hi: float) -> float:
    """P(alpha*T/log(alpha) in (lo, hi)) for the linear chain with birth
    alpha*k and death 2*alpha*k from alpha particles, via the classical
    per-line survival probability f(t) = 1/(2 e^{alpha t} - 1) and
    P(T > t) = 1 - (1 - f(t))^{n0}."""
    def upper_tail(scaled):
        t = scaled * math.log(alpha) / alpha
        f = 1.0 / (2.0 * math.exp(alpha * t) - 1.0)
        return -math.expm1(alpha * math.log1p(-f))

    return upper_tail(lo) - upper_tail(hi)


def test_extinction_time_scaling(rng):
    """Linear birth-death chain with birth alpha*k, death 2*alpha*k from
    floor(z*alpha): alpha*T/log(alpha) concentrates near 1.

    At alpha=1e4 the exact law puts only 88.1% of the mass in the 20%
    band (Gumbel tails), so the 90% threshold is checked at alpha=1e5
    where it genuinely holds (94.4% exact), and at alpha=1e4 the
    empirical fraction is checked against the exact value instead.
    """
    n = 500
    for alpha, threshold in ((10 ** 4, None), (10 ** 5, 0.9)):
        times = lm.birth_death_extinction_times(alpha, 2.0 * alpha, alpha, n, rng)
        scaled = times * alpha / math.log(alpha)
        frac = float(np.mean((scaled > 0.8) & (scaled < 1.2)))
        exact = _band_probability_exact(alpha, 0.8, 1.2)
        se = math.sqrt(exact * (1.0 - exact) / n)
        assert abs(frac - exact) < 4.0 * se
        if threshold is not None:
            assert exact > threshold
            assert frac >= threshold


def test_scaled_statistic_uses_natural_log(one_colony, rng):
    sp = SweepParams(alpha=50.0, mu=0.0)
    res = lm.lm_hitting_times(one_colony, sp, 8, rng)
    np.testing.assert_allclose(res.scaled, res.T * 50.0 / math.log(50.0))


def test_kernel_batches_are_seed_deterministic(sym2):
    sp = SweepParams(alpha=40.0, mu=2.0, founder=0)
    a = lm.lm_hitting_times(sym2, sp, 64, RngStream(seed=5, stream_id=2))
    b = lm.lm_hitting_times(sym2, sp, 64, RngStream(seed=5, stream_id=2))
    np.testing.assert_array_equal(a.T, b.T)
    np.testing.assert_array_equal(a.events, b.events)
    c = lm.lm_hitting_times(sym2, sp, 64, RngStream(seed=5, stream_id=3))
    assert not np.array_equal(a.T, c.T)


def test_yule_level_hitting_time_scaling(rng):
    """Supercritical growth: the time for a pure branching process with
    per-head rate alpha to reach alpha^p scales like p*log(alpha)/alpha.
    T_n is a sum of independent Exp(alpha*k) variables, so the exact mean
    is H_{n-1}/alpha (harmonic sum) and the scaled bias H_{n-1}/log(alpha)
    - p vanishes as alpha grows."""
    gen = rng.generator
    n_reps = 2000
    for p in (0.5, 1.0):
        scaled_err = []
        for alpha in (10 ** 3, 10 ** 5):
            n_target = int(alpha ** p)
            ks = np.arange(1, n_target)
            times = (gen.exponential(1.0, size=(n_reps, len(ks))) / (alpha * ks)).sum(axis=1)
            scaled = times * alpha / math.log(alpha)
            exact_mean = np.sum(1.0 / ks) / math.log(alpha)
            se = scaled.std(ddof=1) / math.sqrt(n_reps)
            assert abs(scaled.mean() - exact_mean) < 4 * se
            scaled_err.append(abs(np.median(scaled) - p))
        assert scaled_err[1] < scaled_err[0]  # concentration improves in alpha
