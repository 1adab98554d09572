import numpy as np
import pytest

from delearning.data import synth_generate


@pytest.fixture(scope="session")
def small_synth():
    return synth_generate(n=1200, class_balance=0.3, noise=0.2, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def quick_config(seed=0, n=1500, **over):
    """A few-second end-to-end config: every stage runs, all epochs cut down."""
    import dataclasses

    from delearning.config import BaselineSection, DataSection, RunConfig, SaeSection
    from delearning.stacking import DbnConfig, META_TRAIN
    from delearning.zoo import ZooConfig

    cfg = RunConfig(
        seed=seed,
        data=DataSection(n=n),
        sae=SaeSection(epochs=5),
        zoo=ZooConfig(forest_trees=5, adaboost_rounds=5, subspace_estimators=3, mlp_epochs=3),
        dbn=DbnConfig(hidden_size_candidates=(3, 4), epochs=10),
        meta=META_TRAIN.with_(epochs=10),
        baselines=BaselineSection(n_estimators=5, boosting_rounds=5),
    )
    return dataclasses.replace(cfg, **over)


@pytest.fixture(scope="session")
def quick_run(tmp_path_factory):
    from delearning.runner import run_experiment

    out = tmp_path_factory.mktemp("quick_run")
    report = run_experiment(quick_config(), out)
    return out, report
