import numpy as np
import pytest

from nodecal import autodiff as ad
from nodecal import harris_wilson as hw
from nodecal import trainer
from nodecal.nn import Net, NetSpec, init_net
from nodecal.autodiff import Value
from nodecal.trainer import (
    HWProblem, SampleSet, SIRProblem, TrainingConfig, TrainingDiverged, calibrated_forecast, loss_mse,
    run_multiseed, train_epoch, train_seed,
)


def hw_fixture(seed=0, N=6, M=3):
    rng = np.random.default_rng(seed)
    O, C = hw.synthetic_network(N, M, rng)
    system = hw.HWSystem(O, rng.uniform(0.5, 1.5, M), C, alpha=1.2, beta=2.0, kappa=1.5)
    W, _ = hw.steady_state(system)
    return O, C, W


def hw_spec(M):
    return NetSpec(input_dim=M, output_dim=3, activation="linear", activation_override={-1: "abs"},
                   bias_init=(0.0, 4.0), learning_rate=0.002)


def test_loss_identical_frames_zero():
    f = [np.array([0.2, 0.3, 0.5])] * 3
    assert float(loss_mse([Value(x) for x in f], f).data) == 0.0


def test_loss_unit_difference():
    assert float(loss_mse([Value(np.array([1.0, 0.0, 0.0]))], [np.zeros(3)]).data) == 1.0


def test_loss_matches_double_loop():
    rng = np.random.default_rng(2)
    pred, obs = rng.normal(size=(2, 4)), rng.normal(size=(2, 4))
    expected = 0.0
    for b in range(2):
        for k in range(4):
            expected += (pred[b, k] - obs[b, k]) ** 2
    expected /= 2
    assert float(loss_mse([Value(p) for p in pred], list(obs)).data) == pytest.approx(expected, rel=1e-14)


def test_loss_mismatch_rejected():
    with pytest.raises(ValueError):
        loss_mse([Value(np.ones(3))], [np.ones(3), np.ones(3)])
    with pytest.raises(ValueError):
        loss_mse([Value(np.ones(3))], [np.ones(4)])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(to_learn=[])
    with pytest.raises(ValueError, match="both"):
        TrainingConfig(to_learn=["alpha"], true_parameters={"alpha": 1.0})
    with pytest.raises(ValueError):
        TrainingConfig(to_learn=["alpha"], loss="L1Loss")


def test_unknown_parameter_rejected():
    with pytest.raises(ValueError, match="unknown"):
        SIRProblem(to_learn=["p_infect", "gamma"])
    with pytest.raises(ValueError):
        HWProblem(np.ones(2), np.ones((2, 2)), to_learn=["epsilon"])


@pytest.mark.parametrize("L, B, n", [(100, 90, 10), (10, 1, 9), (1, 1, 1), (5, 5, 1)])
def test_epoch_sample_count(L, B, n):
    assert len(trainer._windows(L, B)) == n


def test_batch_larger_than_series_rejected():
    with pytest.raises(ValueError):
        trainer._windows(5, 6)


def test_pinned_net_at_truth_has_zero_residual():
    O, C, W = hw_fixture()
    problem = HWProblem(O, C, true_parameters={"sigma": 0.0})
    spec = NetSpec(input_dim=3, output_dim=3, num_hidden_layers=0, activation="linear")
    net = Net(spec, [Value(np.zeros((3, 3)), requires_grad=True)], [Value(np.array([1.2, 2.0, 1.5]), requires_grad=True)])
    opt = trainer.make_optimizer(net)
    cfg = TrainingConfig(["alpha", "beta", "kappa"], {"sigma": 0.0})
    before = [p.data.copy() for p in net.parameters()]
    samples = train_epoch(net, opt, problem, W[None], cfg, np.random.default_rng(0))
    assert len(samples) == 1 and samples[0].loss < 1e-10
    for b, p in zip(before, net.parameters()):
        # Adam moves by at most lr per step; near-zero gradients move much less
        assert np.max(np.abs(p.data - b)) <= 0.002 + 1e-12


def test_samples_nonnegative_with_abs_output():
    O, C, W = hw_fixture()
    problem = HWProblem(O, C, true_parameters={"sigma": 0.0})
    cfg = TrainingConfig(["alpha", "beta", "kappa"], {"sigma": 0.0}, epochs=30)
    ss = train_seed(problem, W[None], hw_spec(3), cfg, seed=4)
    assert len(ss) == 30 and np.all(ss.estimates >= 0)
    assert np.all(ss.loss >= 0)


def test_seed_determinism_and_single_seed_merge():
    O, C, W = hw_fixture()
    problem = HWProblem(O, C, true_parameters={"sigma": 0.0})
    cfg = TrainingConfig(["alpha", "beta", "kappa"], {"sigma": 0.0}, epochs=15, seeds=[7])
    a = train_seed(problem, W[None], hw_spec(3), cfg, 7)
    res = run_multiseed(problem, W[None], hw_spec(3), cfg)
    assert np.array_equal(a.estimates, res.samples.estimates)
    assert np.array_equal(a.loss, res.samples.loss)


def test_disjoint_seed_sets_merge_by_tag():
    O, C, W = hw_fixture()
    problem = HWProblem(O, C, true_parameters={"sigma": 0.0})
    mk = lambda seeds: TrainingConfig(["alpha", "beta", "kappa"], {"sigma": 0.0}, epochs=5, seeds=seeds)
    r1 = run_multiseed(problem, W[None], hw_spec(3), mk([0, 1]))
    r2 = run_multiseed(problem, W[None], hw_spec(3), mk([2]))
    merged = SampleSet.merge([r1.samples, r2.samples])
    assert set(merged.seed) == {0, 1, 2} and len(merged) == 15
    assert np.array_equal(merged.for_seed(2).loss, r2.samples.loss)


def test_parallel_workers_match_serial():
    O, C, W = hw_fixture()
    problem = HWProblem(O, C, true_parameters={"sigma": 0.0})
    cfg = TrainingConfig(["alpha", "beta", "kappa"], {"sigma": 0.0}, epochs=5, seeds=[0, 1])
    a = run_multiseed(problem, W[None], hw_spec(3), cfg, workers=1)
    b = run_multiseed(problem, W[None], hw_spec(3), cfg, workers=2)
    assert np.array_equal(a.samples.estimates, b.samples.estimates)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported_per_seed():
    O, C, W = hw_fixture()
    problem = HWProblem(O, C, true_parameters={"sigma": 0.0})
    spec = NetSpec(input_dim=3, output_dim=3, num_hidden_layers=0, activation="linear",
                   activation_override={-1: "abs"}, bias_init=(1e6, 2e6))
    cfg = TrainingConfig(["alpha", "beta", "kappa"], {"sigma": 0.0}, epochs=3, seeds=[0, 1])
    with pytest.raises(TrainingDiverged):
        run_multiseed(problem, W[None], spec, cfg)


def test_sir_training_runs_and_records_physical_tau():
    rng = np.random.default_rng(0)
    series = np.cumsum(rng.uniform(0, 0.01, size=(20, 3)), axis=0)
    series = series / series.sum(axis=1, keepdims=True)
    problem = SIRProblem()
    spec = NetSpec(input_dim=3, output_dim=3, activation="linear", activation_override={-1: "abs"},
                   bias_init=(0.0, 1.0), learning_rate=0.002)
    cfg = TrainingConfig(list(problem.to_learn), batch_size=15, epochs=2)
    ss = train_seed(problem, series, spec, cfg, 0)
    assert len(ss) == 2 * 5
    net = init_net(spec, 0)
    lam = net(series[0]).data
    np.testing.assert_allclose(ss.estimates[0], problem.to_physical(lam))
    assert ss.estimates[0][1] == pytest.approx(10 * lam[1])


def test_forecast_at_truth_is_exact():
    O, C, W = hw_fixture()
    problem = HWProblem(O, C, true_parameters={"sigma": 0.0})
    fc = calibrated_forecast(problem, np.array([1.2, 2.0, 1.5]), W[None], replicas=3)
    assert fc.mspe < 1e-12
    assert np.all(fc.std == 0)


def test_forecast_single_replica_has_zero_std():
    problem = SIRProblem(to_learn=["p_infect", "t_infectious"], true_parameters={"sigma": 0.0})
    series = np.array([[0.99, 0.01, 0.0], [0.98, 0.02, 0.0], [0.96, 0.035, 0.005]])
    fc = calibrated_forecast(problem, np.array([0.3, 14.0]), series, replicas=1)
    assert np.all(fc.std == 0) and fc.mean.shape == (3, 3)
