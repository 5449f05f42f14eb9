"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import poupinn


def test_mlp_forward_and_bundle_agree_with_finite_differences():
    spec = poupinn.MlpSpec(input_dim=2, hidden=[8, 6], output_dim=1, activation="tanh")
    assert spec.param_count == (2 * 8 + 8) + (8 * 6 + 6) + (6 * 1 + 1)
    params = poupinn.init_params(spec, seed=7)
    again = poupinn.init_params(spec, seed=7)
    np.testing.assert_array_equal(params.values, again.values)

    rng = np.random.default_rng(0)
    params.set_values(rng.uniform(-0.8, 0.8, spec.param_count))
    x = np.array([0.3, -0.4])
    value, grad, _ = poupinn.mlp_bundle(spec, params, x)
    assert value[0] == pytest.approx(poupinn.mlp_forward(spec, params, x)[0], abs=1e-15)

    h = 1e-6
    for a in range(2):
        xp, xm = x.copy(), x.copy()
        xp[a] += h
        xm[a] -= h
        fd = (poupinn.mlp_forward(spec, params, xp)[0]
              - poupinn.mlp_forward(spec, params, xm)[0]) / (2 * h)
        assert grad[a] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_partition_of_unity_sums_to_one():
    rng = np.random.default_rng(1)
    points = rng.uniform(0, 1, size=(400, 2))
    partition = poupinn.kmeans_init(points, balls=5, seed=3)
    assert partition.size == 5
    assert poupinn.coverage_check(partition, points) == []
    for x in points[:100]:
        active, lam = poupinn.gate_weights(partition, x)
        assert len(active) == len(lam)
        assert sum(lam) == pytest.approx(1.0, abs=1e-12)
        assert all(l >= 0 for l in lam)


def test_closed_form_density_matches_brute_force():
    rng = np.random.default_rng(2)
    r2 = rng.uniform(0, 1.2, 20 * 20)
    cell = 1.0 / r2.size
    closed = poupinn.closed_form_pstar(r2, beta=0.5, cell_volume=cell)
    assert np.sum(closed) * cell == pytest.approx(1.0, abs=1e-12)
    brute = poupinn.brute_force_pstar(r2, beta=0.5, cell_volume=cell)
    assert np.max(np.abs(closed - brute)) < 1e-6
    # Gibbs shape: log p affine in r^2
    fit = np.polyfit(r2, np.log(closed), 1)
    assert fit[0] == pytest.approx(1 / 0.5, rel=1e-6)


def test_adaptive_density_samples_where_it_has_mass():
    rng = np.random.default_rng(3)
    points = rng.uniform(0, 1, size=(500, 2))
    partition = poupinn.kmeans_init(points, balls=3, seed=5)
    density = poupinn.AdaptiveDensity(partition, lo=[0, 0], hi=[1, 1], beta=0.5,
                                      seed=11, n_mc=20000)
    pts, pdf = density.sample(1000, seed=21)
    assert pts.shape == (1000, 2)
    assert np.all(pdf > 0)
    for row, p in zip(pts[:50], pdf[:50]):
        assert density.pdf(row) == pytest.approx(p, rel=1e-12)


def test_reference_oracles():
    helm = poupinn.helmholtz_problem()
    grid = poupinn.helmholtz_reference(helm, n=24)
    assert grid.shape == (26, 26)
    assert np.all(grid[0] == 0) and np.all(grid[-1] == 0)  # Dirichlet ring

    burgers = poupinn.burgers_problem()
    pts = np.array([[0.0, 0.3], [0.4, 0.2], [-0.4, 0.2]])
    u = poupinn.burgers_reference(burgers, pts)
    assert abs(u[0]) < 1e-10          # odd symmetry
    assert u[1] == pytest.approx(-u[2], abs=1e-9)
    assert np.all(np.abs(u) <= 1 + 1e-9)

    assert poupinn.relative_l2(grid.ravel(), grid.ravel()) == 0.0


def test_tiny_training_run_decreases_the_loss(tmp_path):
    config = """
    problem = supervised
    balls = 3
    hidden = 6
    kmeans_points = 400
    outer_iterations = 6
    n_interior = 200
    n_boundary = 0
    heldout_boundary = 0
    ascent_inner_steps = 2
    n_mc_mass = 5000
    seed = 4
    """
    result = poupinn.train_from_config(config, str(tmp_path / "run"))
    loss = result["loss"]
    assert loss[-1] < loss[0]
    assert (tmp_path / "run" / "model.ckpt").exists()

    model = poupinn.load_checkpoint(str(tmp_path / "run" / "model.ckpt"))
    np.testing.assert_array_equal(model.flat_params(), result["model"].flat_params())

    again = poupinn.train_from_config(config, str(tmp_path / "again"))
    np.testing.assert_array_equal(loss, again["loss"])
