import warnings

import numpy as np
import pytest

from robust_tr.contaminate import (
    ContaminationSpec,
    contaminated_group_moments,
    contaminated_scatter,
    first_order_one_group,
    sample_contaminated,
    tr_perturbation_bound,
)
from robust_tr.exceptions import NumericalError, ValidationError
from robust_tr.moments import GroupModel, classical_scatter, theoretical_scatter
from robust_tr.sim import build_scenario

EPS_GRID = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)


def scalar_models():
    return GroupModel([0.0], [[1.0]]), GroupModel([3.0], [[1.0]])


def test_group_moments_boundaries():
    m = GroupModel([1.0, 2.0], np.eye(2))
    c = GroupModel([4.0, -1.0], np.diag([2.0, 3.0]))
    e, v = contaminated_group_moments(m, c, 0.0)
    assert np.allclose(e, m.mu) and np.allclose(v, m.sigma)
    e, v = contaminated_group_moments(m, c, 1.0)
    assert np.allclose(e, c.mu) and np.allclose(v, c.sigma)


def test_group_moments_scalar_and_monte_carlo():
    m, c = scalar_models()
    e, v = contaminated_group_moments(m, c, 0.1)
    assert e[0] == pytest.approx(0.3)
    assert v[0, 0] == pytest.approx(1.81)
    spec = ContaminationSpec(0.1, (c,))
    d = sample_contaminated([GroupModel([0.0], [[1.0]], 1.0)], spec, 1_000_000, seed=5)
    z = d.x[:, 0]
    assert abs(z.mean() - 0.3) <= 3 * np.sqrt(1.81 / z.size)
    # the sample variance of a mixture has s.e. about sqrt((m4 - var^2) / n)
    m4 = np.mean((z - z.mean()) ** 4)
    assert abs(z.var() - 1.81) <= 3 * np.sqrt((m4 - 1.81**2) / z.size)


def test_scatter_at_zero_epsilon_is_clean():
    spec = build_scenario("III")
    clean = theoretical_scatter(spec.models)
    cont = contaminated_scatter(spec.models, spec.contamination(0.0))
    assert np.allclose(cont.b, clean.b) and np.allclose(cont.w, clean.w)


def test_translation_only_contamination_keeps_b():
    spec = build_scenario("I")
    shift = np.array([0.0, 5.0, -1.0])
    cont = tuple(GroupModel(m.mu + shift, m.sigma, m.prior) for m in spec.models)
    c = contaminated_scatter(spec.models, ContaminationSpec(0.2, cont))
    assert np.allclose(c.b, theoretical_scatter(spec.models).b, atol=1e-12)


@pytest.mark.parametrize("scenario", ["I", "II", "III", "IV"])
@pytest.mark.parametrize("eps", EPS_GRID)
def test_scatter_equals_mixture_of_moments(scenario, eps):
    spec = build_scenario(scenario, 2 if scenario == "IV" else 0)
    c = contaminated_scatter(spec.models, spec.contamination(eps))
    pieces = [contaminated_group_moments(m, cm, eps) for m, cm in zip(spec.models, spec.contaminating)]
    mixed = theoretical_scatter([GroupModel(e, v, m.prior) for (e, v), m in zip(pieces, spec.models)])
    assert np.allclose(c.w, mixed.w, atol=1e-10)
    assert np.allclose(c.b, mixed.b, atol=1e-10)
    for a in (c.b, c.w):
        assert np.allclose(a, a.T)
        assert np.linalg.eigvalsh(a)[0] >= -1e-10


def test_several_contaminated_groups_monte_carlo():
    spec = build_scenario("II")
    cont = (GroupModel([1.0, 5.0, 0.0], np.eye(3)), None, GroupModel([-2.0, 0.0, 4.0], np.diag([2.0, 1, 1])), None)
    models = spec.models
    cs = ContaminationSpec(0.2, cont)
    exact = contaminated_scatter(models, cs)
    d = sample_contaminated(models, cs, 50_000, seed=3)
    s = classical_scatter(d)
    for a, b in ((s.b, exact.b), (s.w, exact.w)):
        assert np.linalg.norm(a - b) <= 0.02 * np.linalg.norm(b)


def test_scenario_one_monte_carlo_entrywise():
    spec = build_scenario("I")
    exact = contaminated_scatter(spec.models, spec.contamination(0.1))
    s = classical_scatter(sample_contaminated(spec.models, spec.contamination(0.1), 200_000, seed=1))
    for a, b in ((s.b, exact.b), (s.w, exact.w)):
        big = np.abs(b) > 0.05 * np.abs(b).max()
        assert np.all(np.abs(a - b)[big] <= 0.02 * np.abs(b)[big])


def test_first_order_zero_shift():
    spec = build_scenario("I")
    m1 = spec.models[0]
    cs = ContaminationSpec(0.1, (GroupModel(m1.mu, m1.sigma), None, None, None))
    db, dw = first_order_one_group(spec.models, cs)
    assert np.allclose(db, 0) and np.allclose(dw, 0)


def test_first_order_requires_group_one():
    spec = build_scenario("II")
    with pytest.raises(ValidationError, match="group 1"):
        first_order_one_group(spec.models, spec.contamination(0.1))


def relabel_two_first():
    spec = build_scenario("II")
    order = [1, 0, 2, 3]
    models = [spec.models[i] for i in order]
    cont = [spec.contaminating[i] for i in order]
    return models, ContaminationSpec(0.05, cont)


def test_first_order_hand_expansion():
    models, cs = relabel_two_first()
    db, dw = first_order_one_group(models, cs)
    # group 1 is N((0, 3, 0), diag(1, 3, 1)) moved to (0, -27, 0); overall mean (0, 0, 0.5)
    delta = np.array([0.0, -30.0, 0.0])
    small = np.array([0.0, 3.0, -0.5])
    eps, p1 = 0.05, 0.25
    dw_hand = np.zeros((3, 3))
    db_hand = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            dw_hand[i, j] = eps * p1 * delta[i] * delta[j]
            db_hand[i, j] = eps * p1 * (small[i] * delta[j] + delta[i] * small[j])
    assert np.allclose(dw, dw_hand, atol=1e-12)
    assert np.allclose(db, db_hand, atol=1e-12)


def test_first_order_residual_is_quadratic():
    models, cs = relabel_two_first()
    clean = theoretical_scatter(models)

    def resid(eps):
        c = cs.with_epsilon(eps)
        exact = contaminated_scatter(models, c)
        db, dw = first_order_one_group(models, c)
        return (np.linalg.norm(exact.b - clean.b - db), np.linalg.norm(exact.w - clean.w - dw))

    for e in (0.02, 0.01):
        rb, rw = resid(e)
        hb, hw = resid(e / 2)
        assert rb / hb == pytest.approx(4.0, rel=0.1)
        assert rw / hw == pytest.approx(4.0, rel=0.1)


def test_bound_zero_epsilon():
    spec = build_scenario("I")
    rep = tr_perturbation_bound(spec.models, 2, spec.contamination(0.0))
    assert rep.observed_angle_sin == pytest.approx(0.0, abs=1e-12)
    assert rep.bound_value == 0.0
    assert rep.tau > 0


@pytest.mark.parametrize("eps", [1e-4, 1e-3, 0.05, 0.3])
def test_bound_report_sanity(eps):
    spec = build_scenario("I")
    rep = tr_perturbation_bound(spec.models, 2, spec.contamination(eps))
    assert 0 <= rep.observed_angle_sin <= 1 + 1e-12
    assert rep.bound_value >= 0
    # the closed form with p_1 dominates the general bound built from the same first-order terms
    assert rep.specialized_corrected >= rep.general_first_order


def test_bound_small_epsilon_regime():
    spec = build_scenario("I")
    reps = [tr_perturbation_bound(spec.models, 2, spec.contamination(e)) for e in (1e-4, 1e-3)]
    for r in reps:
        assert r.observed_angle_sin <= r.specialized
        assert r.observed_angle_sin <= r.general
    ratios = [r.observed_angle_sin / e for r, e in zip(reps, (1e-4, 1e-3))]
    assert abs(ratios[0] - ratios[1]) <= 0.25 * max(ratios)


def test_bound_requires_gap():
    models = [GroupModel([1.0, 0.0], np.eye(2), 0.5), GroupModel([-1.0, 0.0], np.eye(2), 0.5)]
    # k = 2 = p would have no gap to test, so use an isotropic three-dimensional problem
    iso = [GroupModel([0.0, 0.0, 0.0], np.eye(3), 0.5), GroupModel([0.0, 0.0, 0.0], np.eye(3), 0.5)]
    with pytest.raises(NumericalError, match="not unique"):
        tr_perturbation_bound(iso, 1, ContaminationSpec(0.01, (GroupModel([1.0, 0, 0], np.eye(3)), None)))
    assert tr_perturbation_bound(models, 1, ContaminationSpec(0.01, (GroupModel([1.0, 1.0], np.eye(2)), None))).gamma > 0


def test_sampler_boundaries_and_determinism():
    spec = build_scenario("I")
    d0 = sample_contaminated(spec.models, spec.contamination(0.0), 50, seed=4)
    plain = sample_contaminated(spec.models, None, 50, seed=4)
    assert np.array_equal(d0.x, plain.x)
    d1, mask = sample_contaminated(spec.models, spec.contamination(1.0), 50, seed=4, return_mask=True)
    assert mask[:50].all() and not mask[50:].any()
    assert abs(d1.group(1)[:, 1].mean() + 27) < 0.5
    again = sample_contaminated(spec.models, spec.contamination(0.3), 50, seed=(4, 1))
    assert np.array_equal(again.x, sample_contaminated(spec.models, spec.contamination(0.3), 50, seed=(4, 1)).x)


def test_sampler_group_mean():
    spec = build_scenario("I")
    d = sample_contaminated(spec.models, spec.contamination(0.1), 100_000, seed=8)
    x1 = d.group(1)
    mean, var = contaminated_group_moments(spec.models[0], spec.contaminating[0], 0.1)
    se = np.sqrt(np.diag(var) / x1.shape[0])
    assert np.all(np.abs(x1.mean(axis=0) - mean) <= 3 * se)


def test_sampler_rejects_non_spd_and_warns_on_odd_fraction():
    bad = GroupModel.__new__(GroupModel)
    object.__setattr__(bad, "mu", np.zeros(2))
    object.__setattr__(bad, "sigma", np.array([[1.0, 2.0], [2.0, 1.0]]))
    object.__setattr__(bad, "prior", 1.0)
    with pytest.raises(ValidationError):
        sample_contaminated([bad], None, 5)
    m = GroupModel([0.0], [[1.0]], 1.0)
    cs = ContaminationSpec(0.05, (GroupModel([5.0], [[1.0]]),))
    se = np.sqrt(0.05 * 0.95 / 10)
    hits = 0
    for seed in range(300):
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always")
            _, mask = sample_contaminated([m], cs, 10, seed=seed, return_mask=True)
        far = abs(mask.mean() - 0.05) > 3 * se
        assert bool(w) == far
        hits += far
    assert hits > 0
