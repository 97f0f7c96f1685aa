import pytest

from dglle.config import OptimConfig, TrainConfig
from dglle.synth import SynthConfig, export_dataset

TINY_SYNTH = SynthConfig(image_size=16, counts={"train": 8, "val": 3, "test": 3})


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny_ds")
    export_dataset(TINY_SYNTH, path)
    return path


def tiny_train_config(dataset_dir, **kw):
    defaults = dict(
        dataset_dir=str(dataset_dir), mode="full", widths=(4, 8),
        depth_base_width=4, blocks_per_level=1, epochs=2, batch_size=4,
        seed=0, optimizer=OptimConfig(lr=1e-3),
    )
    defaults.update(kw)
    return TrainConfig(**defaults)
