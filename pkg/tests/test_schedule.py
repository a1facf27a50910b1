import numpy as np
import pytest

from incctr.data import SynthConfig, generate_synthetic
from incctr.errors import ScheduleError
from incctr.model import ModelConfig
from incctr.registry import RegistryConfig
from incctr.schedule import batch_delay, run_schedule
from incctr.trainer import TrainConfig

SMALL = ModelConfig(k=4, cross_layers=1, hidden=(8,))


@pytest.fixture(scope="module")
def stream():
    return generate_synthetic(SynthConfig(days=24, samples_per_day=300, m=3, base_vocab_per_field=10, seed=9))


@pytest.fixture(scope="module")
def result(stream):
    arms = {"batch": TrainConfig(mode="batch", epoch_cap=1, batch_size=128),
            "batch-2": TrainConfig(mode="batch", epoch_cap=1, batch_size=128),
            "ft": TrainConfig(mode="ft", batch_size=128),
            "kd_batch": TrainConfig(mode="kd_batch", batch_size=128),
            "kd_self": TrainConfig(mode="kd_self", batch_size=128)}
    return run_schedule(stream, 7, 23, arms, RegistryConfig(threshold=2), SMALL)


def test_batch_delay_names():
    assert batch_delay("batch") == 0
    assert batch_delay("batch-3") == 3
    assert batch_delay("ft") is None


def test_every_arm_has_sixteen_updates(result):
    assert not result.failures
    for arm in ("batch", "batch-2", "ft", "kd_batch", "kd_self"):
        recs = result.arm_metrics(arm)
        assert [r.step for r in recs] == list(range(7, 23))


def test_no_leakage(result):
    for arm, ckpts in result.checkpoints.items():
        for s, ck in zip(range(7, 23), ckpts):
            assert ck.train_end <= s + 1, arm
    assert result.warm.train_end == 7
    for s, ck in zip(range(7, 23), result.checkpoints["batch-2"]):
        assert ck.train_end == max(s - 2, 0) + 1


def test_incremental_epochs(result):
    assert all(r.epochs == 1 for r in result.arm_metrics("ft"))
    assert all(1 <= r.epochs <= 5 for r in result.arm_metrics("kd_self"))


def test_schedule_is_deterministic(stream):
    arms = {"batch": TrainConfig(mode="batch", epoch_cap=1, batch_size=128), "ft": TrainConfig(mode="ft")}
    a = run_schedule(stream, 5, 8, arms, RegistryConfig(threshold=2), SMALL, keep_checkpoints=False)
    b = run_schedule(stream, 5, 8, arms, RegistryConfig(threshold=2), SMALL, keep_checkpoints=False)
    strip = lambda rs: [(r.step, r.arm, r.auc, r.logloss, r.epochs) for r in rs]
    assert strip(a.metrics) == strip(b.metrics)


def test_parallel_matches_serial(stream):
    arms = {"ft": TrainConfig(mode="ft"), "kd_self": TrainConfig(mode="kd_self")}
    a = run_schedule(stream, 5, 7, arms, RegistryConfig(threshold=2), SMALL, keep_checkpoints=False)
    b = run_schedule(stream, 5, 7, arms, RegistryConfig(threshold=2), SMALL, keep_checkpoints=False, jobs=2)
    strip = lambda rs: [(r.step, r.arm, r.auc, r.logloss, r.epochs) for r in rs]
    assert strip(a.metrics) == strip(b.metrics)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failing_arm_is_isolated(stream):
    arms = {"ft": TrainConfig(mode="ft"),
            "bad": TrainConfig(mode="ft", lr_existing=1e300, lr_new=1e300, lr_network=1e300)}
    res = run_schedule(stream, 5, 7, arms, RegistryConfig(threshold=2), SMALL, keep_checkpoints=False)
    assert "bad" in res.failures and "NumericError" in res.failures["bad"]
    assert len(res.arm_metrics("ft")) == 2


def test_schedule_errors(stream):
    with pytest.raises(ScheduleError):
        run_schedule(stream, 7, 30, {"ft": TrainConfig()})
    with pytest.raises(ScheduleError):
        run_schedule(stream, 7, 7, {"ft": TrainConfig()})
    with pytest.raises(ScheduleError):
        run_schedule(stream, 7, 10, {"nightly": TrainConfig(mode="batch")})
    with pytest.raises(ScheduleError):
        run_schedule(stream, 7, 10, {})
