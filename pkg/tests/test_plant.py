import numpy as np
import pytest

from mhof import plant
from mhof.core import pareto_filter
from mhof.errors import ConfigError, DimensionError, NumericError
from mhof.plant import OptimizerState, ProblemSpec, epoch, make_problem, optimizer_step

from oracles import fd_gradient, penalized, rel_error


def quad_1d():
    return make_problem(ProblemSpec("quadratic", d=1, p=1, anchor=(0.0,), centers=((2.0,),)))


@pytest.fixture(scope="module")
def mlp():
    return make_problem(ProblemSpec("toy-mlp", d=3, hidden=4, n_per_class=50, seed=2))


class TestEvaluate:
    def test_anchor_minimizes_loss(self):
        prob = make_problem(ProblemSpec("quadratic", d=2, p=3, seed=4))
        assert prob.evaluate(prob.anchor).ell == 0.0

    def test_hand_values(self):
        ov = quad_1d().evaluate([1.0])
        assert ov.ell == 0.5
        assert np.array_equal(ov.reg, [0.5])

    def test_zero_weights(self, mlp):
        ov = mlp.evaluate(np.zeros(mlp.p))
        assert ov.reg[0] == 0.0
        assert ov.ell == pytest.approx(np.log(2))

    def test_nan_names_term(self):
        with pytest.raises(NumericError) as exc:
            quad_1d().evaluate([np.nan])
        assert exc.value.term == "ell"

    def test_wrong_length(self):
        with pytest.raises(DimensionError):
            quad_1d().evaluate([1.0, 2.0])

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            make_problem(ProblemSpec("toy-mlp", d=2))
        with pytest.raises(ConfigError):
            make_problem(ProblemSpec("quadratic", d=1, p=2, anchor=(0.0,)))
        with pytest.raises(ConfigError):
            make_problem(ProblemSpec("quadratic", d=1, p=1, anchor=(1.0,), centers=((1.0,),)))


class TestGradient:
    def test_minimizer_is_stationary(self):
        prob = make_problem(ProblemSpec("quadratic", d=3, p=4, seed=1))
        mu = np.array([0.5, 2.0, 7.0])
        theta = (prob.anchor + mu @ prob.centers) / (1 + mu.sum())
        assert np.allclose(prob.minimizer(mu), theta)
        assert np.allclose(prob.grad_penalized(theta, mu), 0.0, atol=1e-12)

    def test_hand_value(self):
        assert np.array_equal(quad_1d().grad_penalized([0.0], [1.0]), [-2.0])

    @pytest.mark.parametrize("kind", ["quadratic", "toy-mlp"])
    def test_finite_differences(self, kind, mlp):
        prob = mlp if kind == "toy-mlp" else make_problem(ProblemSpec("quadratic", d=2, p=4, seed=5))
        rng = np.random.default_rng(0)
        for _ in range(10):
            theta = rng.normal(size=prob.p)
            mu = rng.uniform(0.01, 3.0, size=prob.d)
            assert rel_error(prob.grad_penalized(theta, mu), fd_gradient(prob, theta, mu)) <= 1e-5

    def test_module_wrappers(self):
        prob = quad_1d()
        assert plant.evaluate(prob, [1.0]) == prob.evaluate([1.0])
        assert np.array_equal(plant.grad_penalized(prob, [0.0], [1.0]), [-2.0])


class TestOptimizer:
    def test_sgd_zero_grad(self):
        _, theta = optimizer_step(OptimizerState("sgd", 0.1), [1.0, 2.0], [0.0, 0.0])
        assert np.array_equal(theta, [1.0, 2.0])

    def test_sgd_step(self):
        _, theta = optimizer_step(OptimizerState("sgd", 0.1), [1.0], [2.0])
        assert theta[0] == pytest.approx(0.8)

    @pytest.mark.parametrize("g", [1e-3, -2.0, 50.0])
    def test_adam_first_step(self, g):
        opt, theta = optimizer_step(OptimizerState("adam", 0.01), [0.0], [g])
        # m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
        assert abs(theta[0]) == pytest.approx(0.01 * abs(g) / (abs(g) + 1e-8))
        assert np.sign(theta[0]) == -np.sign(g)
        assert opt.t == 1

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            optimizer_step(OptimizerState("sgd"), [1.0], [1.0, 2.0])

    @pytest.mark.parametrize("kind, lr", [("nesterov", 0.1), ("sgd", 0.0)])
    def test_validate(self, kind, lr):
        with pytest.raises(ConfigError):
            OptimizerState(kind, lr).validate()


class TestEpoch:
    def test_single_inner_step(self):
        prob = make_problem(ProblemSpec("quadratic", d=2, p=3, seed=2))
        theta = prob.init_theta(0)
        mu = np.array([1.0, 2.0])
        _, a = epoch(prob, OptimizerState("sgd", 0.1), theta, mu, inner_steps=1)
        _, b = optimizer_step(OptimizerState("sgd", 0.1), theta, prob.grad_penalized(theta, mu))
        assert np.array_equal(a, b)

    def test_contraction(self):
        prob = make_problem(ProblemSpec("quadratic", d=2, p=4, seed=3))
        mu = np.array([0.5, 1.5])
        lr = 0.9 * 2 / (1 + mu.sum())
        theta = prob.init_theta(1)
        opt = OptimizerState("sgd", lr)
        for _ in range(30):
            before = penalized(prob, theta, mu)
            opt, theta = epoch(prob, opt, theta, mu)
            after = penalized(prob, theta, mu)
            assert after < before or np.allclose(theta, prob.minimizer(mu))

    def test_tiny_mu_reaches_anchor(self):
        prob = make_problem(ProblemSpec("quadratic", d=2, p=4, seed=6))
        mu = np.full(2, 1e-12)
        _, theta = epoch(prob, OptimizerState("sgd", 0.5), prob.init_theta(0), mu, inner_steps=1000)
        assert np.linalg.norm(theta - prob.anchor) < 1e-3

    def test_divergence_raises(self):
        prob = make_problem(ProblemSpec("quadratic", d=1, p=2, seed=0))
        with pytest.raises(NumericError), np.errstate(over="ignore", invalid="ignore"):
            epoch(prob, OptimizerState("sgd", 1e6), prob.init_theta(0), [1e6], inner_steps=200)

    def test_bad_inner_steps(self):
        with pytest.raises(ValueError):
            epoch(quad_1d(), OptimizerState("sgd"), [0.0], [1.0], inner_steps=0)


class TestGeometry:
    def test_minimizer_in_hull(self):
        # convex combination with weights (1, mu) / (1 + sum mu)
        prob = make_problem(ProblemSpec("quadratic", d=3, p=4, seed=7))
        rng = np.random.default_rng(1)
        for _ in range(20):
            mu = rng.uniform(0, 100, size=3)
            w = np.concatenate([[1.0], mu]) / (1 + mu.sum())
            assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
            pts = np.vstack([prob.anchor, prob.centers])
            assert np.allclose(w @ pts, prob.minimizer(mu))

    def test_mu_sweep_traces_a_front(self):
        prob = make_problem(ProblemSpec("quadratic", d=1, p=4, seed=8))
        outs = [prob.evaluate(prob.minimizer([m])) for m in np.geomspace(1e-3, 1e3, 25)]
        assert len(pareto_filter(outs)) == len(outs)


class TestDeterminism:
    def test_blobs(self):
        X1, y1 = plant.make_blobs(3, 40)
        X2, y2 = plant.make_blobs(3, 40)
        assert np.array_equal(X1, X2) and np.array_equal(y1, y2)
        assert not np.array_equal(X1, plant.make_blobs(4, 40)[0])

    def test_init_theta(self, mlp):
        assert np.array_equal(mlp.init_theta(5), mlp.init_theta(5))

    def test_digest_stable(self):
        a = ProblemSpec("quadratic", d=2, seed=1)
        assert a.digest() == ProblemSpec("quadratic", d=2, seed=1).digest()
        assert a.digest() != ProblemSpec("quadratic", d=2, seed=2).digest()
