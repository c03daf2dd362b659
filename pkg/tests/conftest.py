from pathlib import Path

import pytest

from synth import export_tiny, write_synthetic_dataset


@pytest.fixture(scope="session")
def tiny_model_224(tmp_path_factory) -> Path:
    return export_tiny(tmp_path_factory.mktemp("model224"), side=224)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory) -> Path:
    return write_synthetic_dataset(tmp_path_factory.mktemp("dataset"))
