import numpy as np
import pytest

from riskplan.config import substream
from riskplan.prediction import (
    NetConfig,
    NetworkParams,
    TrainConfig,
    TrainingDivergence,
    dataset_from_scenarios,
    train,
)
from riskplan.prediction.backprop import random_scene
from riskplan.suite import build_training_scenario, toy_training_samples

TOY_CFG = NetConfig(d_h=8, h_p=6, h_f=6, grid_x=5, grid_y=3, conv_channels=2)


@pytest.fixture(scope="module")
def toy_dataset():
    # structured recorded motion (learnable), same source as the bundled
    # training fixture
    scenario = build_training_scenario(seed=0)
    pairs = toy_training_samples(scenario, TOY_CFG.h_p, TOY_CFG.h_f,
                                 anchors=range(8, 12))
    samples = [[0, agent_id, anchor] for agent_id, anchor in pairs]
    return dataset_from_scenarios([scenario], samples, TOY_CFG)


def test_training_reduces_loss(toy_dataset):
    rng = substream(0, "train")
    params = NetworkParams.init(TOY_CFG, rng, scale=0.5)
    _, losses = train(params, toy_dataset, TrainConfig(lr=1e-2, steps=60))
    assert losses[-1] <= 0.5 * losses[0]


def test_training_deterministic(toy_dataset):
    rng = substream(0, "train")
    params = NetworkParams.init(TOY_CFG, rng, scale=0.5)
    p1, l1 = train(params, toy_dataset, TrainConfig(lr=1e-2, steps=10))
    p2, l2 = train(params, toy_dataset, TrainConfig(lr=1e-2, steps=10))
    assert l1 == l2  # bit-identical traces
    for name in p1.blocks:
        assert np.array_equal(p1.blocks[name], p2.blocks[name])


def test_zero_learning_rate_keeps_params(toy_dataset):
    rng = substream(0, "train")
    params = NetworkParams.init(TOY_CFG, rng, scale=0.5)
    trained, losses = train(params, toy_dataset, TrainConfig(lr=0.0, steps=5))
    for name in params.blocks:
        assert np.array_equal(trained.blocks[name], params.blocks[name])
    assert len(set(losses)) == 1


def test_train_does_not_mutate_input(toy_dataset):
    rng = substream(0, "train")
    params = NetworkParams.init(TOY_CFG, rng, scale=0.5)
    before = {name: arr.copy() for name, arr in params.blocks.items()}
    train(params, toy_dataset, TrainConfig(lr=1e-2, steps=3))
    for name, arr in params.blocks.items():
        assert np.array_equal(arr, before[name])


def test_empty_dataset_rejected():
    rng = substream(0, "train")
    params = NetworkParams.init(TOY_CFG, rng)
    with pytest.raises(ValueError, match="empty"):
        train(params, [], TrainConfig())


def test_divergence_reports_step(toy_dataset):
    rng = substream(0, "train")
    params = NetworkParams.init(TOY_CFG, rng, scale=0.5)
    params.blocks["out_b"][0] = np.inf
    with pytest.raises(TrainingDivergence) as exc:
        train(params, toy_dataset, TrainConfig(lr=1e-2, steps=3))
    assert exc.value.step == 0


def test_dataset_from_scenario_samples():
    scenario = build_training_scenario(seed=0)
    pairs = toy_training_samples(scenario, TOY_CFG.h_p, TOY_CFG.h_f)
    assert len(pairs) == 32  # 4 agents x 8 anchor steps
    samples = [[0, agent_id, anchor] for agent_id, anchor in pairs]
    dataset = dataset_from_scenarios([scenario], samples, TOY_CFG)
    assert len(dataset) == 32
    for scene, truth in dataset:
        assert scene.ego_inputs.shape == (TOY_CFG.h_p, 4)
        assert scene.neighbor_inputs.shape == (3, TOY_CFG.h_p, 4)
        assert truth.shape == (TOY_CFG.h_f, 2)


def test_dataset_unknown_agent_rejected():
    scenario = build_training_scenario(seed=0)
    with pytest.raises(ValueError, match="ghost"):
        dataset_from_scenarios([scenario], [[0, "ghost", 8]], TOY_CFG)
