import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from sweepsim import asg, sde
from sweepsim.core import RngStream, SweepParams
from sweepsim.errors import DomainError, StepSizeTooLarge


def test_drift_unconditioned_hand_example(sym2):
    sp = SweepParams(alpha=1.0, mu=1.0)
    out = sde.drift_unconditioned([0.5, 0.25], sym2, sp)
    np.testing.assert_allclose(out, [0.0, 0.4375], atol=1e-14)


def test_drift_vanishes_at_absorbing_states(sym2):
    sp = SweepParams(alpha=2.0, mu=1.5)
    np.testing.assert_allclose(sde.drift_unconditioned([0.0, 0.0], sym2, sp), 0.0)
    np.testing.assert_allclose(sde.drift_unconditioned([1.0, 1.0], sym2, sp), 0.0)
    np.testing.assert_allclose(sde.drift_conditioned([1.0, 1.0], sym2, sp), 0.0, atol=1e-12)


def test_coth_branches_are_continuous():
    for z0 in (sde.COTH_SERIES_CUTOFF, sde.COTH_ONE_CUTOFF):
        lo = sde.coth_stable(z0 * (1 - 1e-9))
        hi = sde.coth_stable(z0 * (1 + 1e-9))
        assert abs(lo - hi) / hi < 1e-8


def test_coth_series_matches_direct():
    z = np.geomspace(1e-6, 30.0, 400)
    direct = 1.0 / np.tanh(z)
    np.testing.assert_allclose(sde.coth_stable(z), direct, rtol=1e-7)


def test_diffusion_coefficient_examples(one_colony):
    np.testing.assert_allclose(
        sde.diffusion_coefficient([0.0], one_colony), [0.0]
    )
    np.testing.assert_allclose(
        sde.diffusion_coefficient([1.0], one_colony), [0.0]
    )
    np.testing.assert_allclose(
        sde.diffusion_coefficient([0.5], one_colony), [0.5]
    )


def test_diffusion_coefficient_small_colony():
    from sweepsim.core import build_migration
    ms = build_migration(2, [[0, 3], [1, 0]])  # rho = (1/4, 3/4)
    out = sde.diffusion_coefficient([0.5, 0.5], ms)
    assert out[0] == pytest.approx(1.0)  # sqrt(0.25/0.25)


def test_conditioned_drift_small_x_limit(one_colony):
    # alpha*x*coth(alpha*x) -> 1, so the drift tends to (1-x) ~ 1
    sp = SweepParams(alpha=3.0, mu=0.0)
    for x in (1e-10, 1e-7, 1e-5):
        out = sde.drift_conditioned([x], one_colony, sp)
        assert out[0] == pytest.approx(1.0, rel=1e-3)


def test_conditioned_drift_rejects_zero(one_colony):
    with pytest.raises(DomainError):
        sde.drift_conditioned([0.0], one_colony, SweepParams(alpha=1.0))


def test_conditioned_drift_matches_unconditioned_for_large_argument(sym2):
    sp = SweepParams(alpha=100.0, mu=0.5)
    x = [0.6, 0.7]  # alpha * rho.x = 65 >> 20
    np.testing.assert_allclose(
        sde.drift_conditioned(x, sym2, sp),
        sde.drift_unconditioned(x, sym2, sp),
        rtol=1e-12,
    )


def test_integrate_from_one_is_fixed_at_time_zero(sym2, rng):
    cfg = sde.IntegratorConfig(conditioned=False)
    res = sde.integrate(
        sde.DiffusionState(x=np.array([1.0, 1.0])), sym2,
        SweepParams(alpha=2.0, mu=1.0), cfg, 1.0, rng,
    )
    assert res.outcome == sde.FIXED and res.t_fix == 0.0


def test_trajectories_stay_in_unit_cube(sym2, rng):
    cfg = sde.IntegratorConfig(conditioned=False)
    res = sde.integrate(
        sde.DiffusionState(x=np.array([0.5, 0.5])), sym2,
        SweepParams(alpha=4.0, mu=1.0), cfg, 2.0, rng,
    )
    assert np.all(res.path >= 0.0) and np.all(res.path <= 1.0)


def test_neutral_path_martingale(sym2, rng):
    sp = SweepParams(alpha=0.0, mu=0.0)
    cfg = sde.IntegratorConfig(conditioned=False)
    x0 = np.array([0.4, 0.6])
    samples, _ = sde.endpoint_samples(x0, sym2, sp, cfg, 0.2, 10 ** 4, rng)
    w = samples @ sym2.rho
    z = (w.mean() - x0 @ sym2.rho) / (w.std(ddof=1) / math.sqrt(len(w)))
    assert abs(z) < 4.0


def test_step_size_diagnostic(sym2, rng):
    # strong migration with a coarse step makes the colonies overshoot and
    # ping-pong between the clamped corners without ever absorbing
    cfg = sde.IntegratorConfig(dt=0.01, conditioned=False)
    with pytest.raises(StepSizeTooLarge):
        sde.integrate(
            sde.DiffusionState(x=np.array([1.0, 0.0])), sym2,
            SweepParams(alpha=0.1, mu=500.0), cfg, 100.0, rng,
        )


def test_conditioned_fixation_time_scaling(one_colony, rng):
    """d=1, large alpha: (alpha/log alpha) * T_fix concentrates near 2."""
    alpha = 100.0
    sp = SweepParams(alpha=alpha, mu=0.0)
    cfg = sde.IntegratorConfig(conditioned=True)
    x0 = np.array([sde.default_entrance_eps(alpha)])
    horizon = 8.0 * math.log(alpha) / alpha
    status, times = sde.fixation_times(x0, one_colony, sp, cfg, horizon, 2000, rng)
    fixed = status == sde.FIXED
    assert fixed.mean() > 0.9
    scaled = times[fixed] * alpha / math.log(alpha)
    assert 1.6 < np.median(scaled) < 2.6


def test_entrance_law_metadata_and_default_eps(one_colony, rng):
    sp = SweepParams(alpha=50.0, mu=0.0)
    cfg = sde.IntegratorConfig(conditioned=True)
    res = sde.entrance_law_sample(0, one_colony, sp, cfg, 0.05, rng)
    assert res.eps == pytest.approx(1.0 / (2 * 50.0))


def test_entrance_law_stability_in_eps(one_colony):
    """Entrance-law approximation: the time-tau law becomes insensitive to
    the start frequency as it shrinks (the residual shift is first order
    in eps, so the fine pair must land below 0.05 in KS distance and below
    the coarse pair)."""
    alpha = 100.0
    sp = SweepParams(alpha=alpha, mu=0.0)
    # every start level must sit well above the Euler boundary layer (~dt),
    # otherwise discretization-degenerate discards distort the law
    cfg = sde.IntegratorConfig(dt=2e-5, conditioned=True)
    tau = 0.05
    rng = RngStream(seed=8)
    eps0 = sde.default_entrance_eps(alpha)

    def law(eps):
        s, n_deg, _ = sde.entrance_endpoint_samples(
            0, one_colony, sp, cfg, tau, 10 ** 4, rng, eps=eps
        )
        assert n_deg < 10 ** 4 // 20
        return s[:, 0]

    coarse = ks_2samp(law(eps0), law(eps0 / 5)).statistic
    fine = ks_2samp(law(eps0 / 5), law(eps0 / 25)).statistic
    assert fine < 0.05
    assert fine < coarse


def test_entrance_law_mu_zero_keeps_other_colony_empty(sym2, rng):
    sp = SweepParams(alpha=50.0, mu=0.0, founder=0)
    cfg = sde.IntegratorConfig(conditioned=True)
    res = sde.entrance_law_sample(0, sym2, sp, cfg, 0.2, rng)
    assert np.all(res.path[:, 1] == 0.0)


def test_h_transform_consistency(sym2):
    """E[(1-X*(tau))^k] (conditioned) equals
    E[(1-X(tau))^k h(X(tau))]/h(x) (unconditioned reweighting)."""
    sp = SweepParams(alpha=3.0, mu=1.0)
    x0 = np.array([0.3, 0.1])
    tau = 0.5
    # dt tuned so the 0-boundary clamp bias of the unconditioned run (an
    # O(sqrt(dt)) local-time effect of the clamping scheme) sits inside
    # the 3-SE gate at this replicate count
    n = 12000
    rng = RngStream(seed=31)
    ccfg = sde.IntegratorConfig(dt=1e-4, conditioned=True)
    ucfg = sde.IntegratorConfig(dt=1e-4, conditioned=False)
    cond, n_deg = sde.endpoint_samples(x0, sym2, sp, ccfg, tau, n, rng)
    unc, _ = sde.endpoint_samples(x0, sym2, sp, ucfg, tau, n, rng)
    assert n_deg < n // 100
    h0 = asg.fixation_probability_closed_form(x0, sym2, sp)
    h_unc = np.array(
        [asg.fixation_probability_closed_form(row, sym2, sp) for row in unc]
    )
    for k in ([1, 0], [0, 1], [1, 1]):
        k = np.asarray(k, dtype=float)
        lhs_vals = np.prod((1 - cond) ** k, axis=1)
        rhs_vals = np.prod((1 - unc) ** k, axis=1) * h_unc / h0
        lhs_se = lhs_vals.std(ddof=1) / math.sqrt(len(lhs_vals))
        rhs_se = rhs_vals.std(ddof=1) / math.sqrt(len(rhs_vals))
        gap = abs(lhs_vals.mean() - rhs_vals.mean())
        assert gap < 3.0 * math.hypot(lhs_se, rhs_se)


def test_step_size_convergence(sym2):
    """Halving dt moves the endpoint mean by less than the Monte Carlo
    error at 1e4 replicates."""
    sp = SweepParams(alpha=3.0, mu=1.0)
    x0 = np.array([0.3, 0.5])
    n = 10 ** 4
    rng = RngStream(seed=13)
    means, ses = [], []
    for dt in (1e-3, 5e-4):
        cfg = sde.IntegratorConfig(dt=dt, conditioned=False)
        samples, _ = sde.endpoint_samples(x0, sym2, sp, cfg, 0.3, n, rng)
        w = samples @ sym2.rho
        means.append(w.mean())
        ses.append(w.std(ddof=1) / math.sqrt(n))
    assert abs(means[0] - means[1]) < 3.0 * math.hypot(*ses)


def test_conditioned_all_zero_start_rejected(sym2, rng):
    cfg = sde.IntegratorConfig(conditioned=True)
    with pytest.raises(DomainError):
        sde.integrate(
            sde.DiffusionState(x=np.zeros(2)), sym2, SweepParams(alpha=2.0),
            cfg, 1.0, rng,
        )
