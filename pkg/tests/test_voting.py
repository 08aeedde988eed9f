import mpmath
import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from psv import voting
from psv.encoder import VoteDistribution
from psv.voting import LatentPosterior, VotingError


def posterior(means, variances):
    return LatentPosterior.from_arrays(np.asarray(means, float), np.asarray(variances, float))


def grid_argmax(post, lo, hi, step):
    """Exhaustive per-dimension search; the product density factorizes over dimensions."""
    mu, var = post.arrays()
    z = []
    for d in range(mu.shape[1]):
        g = np.arange(lo[d], hi[d] + step / 2, step)
        dens = (-0.5 * np.log(2 * np.pi * var[:, d])[None, :] - (g[:, None] - mu[None, :, d]) ** 2 / (2 * var[None, :, d])).sum(1)
        z.append(g[np.argmax(dens)])
    return np.array(z)


def mp_log_density(post, z):
    mpmath.mp.dps = 50
    mu, var = post.arrays()
    total = mpmath.mpf(0)
    for i in range(mu.shape[0]):
        for d in range(mu.shape[1]):
            v = mpmath.mpf(float(var[i, d]))
            diff = mpmath.mpf(float(z[d])) - mpmath.mpf(float(mu[i, d]))
            total += -mpmath.log(2 * mpmath.pi * v) / 2 - diff**2 / (2 * v)
    return total


votes_strategy = st.integers(1, 8).flatmap(
    lambda n: st.tuples(
        st.lists(st.lists(st.floats(-5, 5), min_size=3, max_size=3), min_size=n, max_size=n),
        st.lists(st.lists(st.floats(1e-3, 10), min_size=3, max_size=3), min_size=n, max_size=n),
    )
)


def test_single_vote_returns_mean():
    np.testing.assert_array_equal(voting.optimal_latent(posterior([[1.5, -2.0]], [[0.3, 4.0]])), [1.5, -2.0])


def test_two_equal_variance_votes_midpoint():
    assert voting.optimal_latent(posterior([[0.0], [2.0]], [[1.0], [1.0]]))[0] == 1.0


def test_worked_example_against_grid():
    post = posterior([[0.0], [3.0]], [[1.0], [2.0]])
    z = voting.optimal_latent(post)
    assert z[0] == pytest.approx(1.0)
    assert abs(grid_argmax(post, [-1.0], [4.0], 1e-3)[0] - 1.0) <= 1e-3


def test_random_posteriors_against_grid():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = rng.integers(1, 11)
        post = posterior(rng.normal(size=(n, 2)) * 2, rng.uniform(0.05, 2.0, (n, 2)))
        mu, var = post.arrays()
        sd = np.sqrt(var)
        z_grid = grid_argmax(post, (mu - 3 * sd).min(0), (mu + 3 * sd).max(0), 1e-3)
        assert np.all(np.abs(voting.optimal_latent(post) - z_grid) <= 1e-3)


def test_log_density_standard_normal_at_mean():
    post = posterior([[0.0, 0.0, 0.0]], [[1.0, 1.0, 1.0]])
    assert voting.log_product_density(post, [0, 0, 0]) == pytest.approx(-1.5 * np.log(2 * np.pi))


def test_log_density_matches_high_precision():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = rng.integers(1, 6)
        post = posterior(rng.normal(size=(n, 4)), rng.uniform(0.1, 3, (n, 4)))
        z = rng.normal(size=4)
        assert abs(voting.log_product_density(post, z) - float(mp_log_density(post, z))) < 1e-10


def test_log_density_dimension_mismatch():
    with pytest.raises(VotingError):
        voting.log_product_density(posterior([[0.0, 1.0]], [[1.0, 1.0]]), [0.0])


@given(votes_strategy, st.lists(st.floats(-1, 1), min_size=3, max_size=3))
@settings(max_examples=60, deadline=None)
def test_optimum_beats_perturbations(mv, delta):
    post = posterior(*mv)
    z = voting.optimal_latent(post)
    assert voting.log_product_density(post, z) >= voting.log_product_density(post, z + np.array(delta)) - 1e-9


@given(votes_strategy, st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_optimum_permutation_invariant_and_convex(mv, rnd):
    means, variances = mv
    post = posterior(means, variances)
    z = voting.optimal_latent(post)
    order = list(range(len(means)))
    rnd.shuffle(order)
    z_perm = voting.optimal_latent(posterior([means[i] for i in order], [variances[i] for i in order]))
    np.testing.assert_allclose(z, z_perm, rtol=1e-12, atol=1e-12)
    mu, _ = post.arrays()
    assert np.all(z >= mu.min(0) - 1e-9) and np.all(z <= mu.max(0) + 1e-9)


@given(votes_strategy, st.integers(0, 7))
@settings(max_examples=60, deadline=None)
def test_duplicating_a_vote_pulls_towards_it(mv, which):
    means, variances = mv
    which %= len(means)
    z0 = voting.optimal_latent(posterior(means, variances))
    z1 = voting.optimal_latent(posterior(means + [means[which]], variances + [variances[which]]))
    target = np.asarray(means[which])
    assert np.all(np.abs(z1 - target) <= np.abs(z0 - target) + 1e-9)


def test_torch_precision_weighted_mean_matches_numpy():
    rng = np.random.default_rng(2)
    mu, var = rng.normal(size=(3, 7, 5)), rng.uniform(0.1, 2, (3, 7, 5))
    mask = (rng.random((3, 7)) < 0.5).astype(float)
    mask[:, 0] = 1
    got = voting.precision_weighted_mean(torch.tensor(mu), torch.tensor(var), torch.tensor(mask)).numpy()
    for b in range(3):
        keep = mask[b] > 0
        want = voting.optimal_latent(posterior(mu[b, keep], var[b, keep]))
        np.testing.assert_allclose(got[b], want, rtol=1e-12)


def test_posterior_validation():
    with pytest.raises(VotingError):
        LatentPosterior([])
    with pytest.raises(VotingError):
        LatentPosterior([VoteDistribution([0.0], [1.0]), VoteDistribution([0.0, 1.0], [1.0, 1.0])])


# ---------------------------------------------------------------- vote dropping


def test_select_one_vote():
    rng = np.random.default_rng(0)
    votes = list(range(64))
    assert all(len(voting.select_training_votes(votes, 1, rng)) == 1 for _ in range(100))


def test_select_k_uniform():
    rng = np.random.default_rng(1)
    draws = 100_000
    counts = np.zeros(11)
    for _ in range(draws):
        counts[len(voting.selection_indices(64, 10, rng))] += 1
    assert counts[0] == 0
    np.testing.assert_allclose(counts[1:] / draws, 0.1, rtol=0.03)


def test_select_capped_by_vote_count_and_distinct():
    rng = np.random.default_rng(2)
    for _ in range(200):
        idx = voting.selection_indices(5, 50, rng)
        assert 1 <= len(idx) <= 5
        assert len(set(idx.tolist())) == len(idx)


def test_select_empty_errors():
    with pytest.raises(VotingError):
        voting.select_training_votes([], 3, np.random.default_rng(0))


# ---------------------------------------------------------------- baselines


def test_baseline_pooling():
    np.testing.assert_array_equal(voting.aggregate_baseline([[1.0, 2.0]], "max"), [1.0, 2.0])
    np.testing.assert_array_equal(voting.aggregate_baseline([np.zeros(3), np.full(3, 2.0)], "mean"), np.ones(3))
    f = np.random.default_rng(3).normal(size=(9, 4))
    np.testing.assert_array_equal(voting.aggregate_baseline(f, "max"), voting.aggregate_baseline(f[::-1], "max"))
    with pytest.raises(VotingError):
        voting.aggregate_baseline(f, "median")


# ---------------------------------------------------------------- diverse latents


def test_interpolation_endpoints_and_midpoint():
    rng = np.random.default_rng(4)
    post = posterior(rng.normal(size=(6, 3)), rng.uniform(0.2, 2, (6, 3)))
    zs = voting.interpolated_latents(post, 2, 3)
    np.testing.assert_array_equal(zs[0], voting.optimal_latent(post))
    np.testing.assert_array_equal(zs[-1], post.votes[2].mean)
    np.testing.assert_allclose(zs[1], (zs[0] + zs[2]) / 2, rtol=1e-12)
    with pytest.raises(VotingError):
        voting.interpolated_latents(post, 6, 3)
    with pytest.raises(VotingError):
        voting.interpolated_latents(post, 0, 1)


def test_product_sampler_moments():
    post = posterior([[0.0, 1.0], [2.0, 1.0]], [[1.0, 0.5], [1.0, 0.5]])
    z = voting.sample_product(post, 20_000, np.random.default_rng(5))
    np.testing.assert_allclose(z.mean(0), [1.0, 1.0], atol=0.02)
    np.testing.assert_allclose(z.var(0), [0.5, 0.25], rtol=0.05)
