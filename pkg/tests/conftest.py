import pytest

from timesup.data import WindowSpec
from timesup.model import ComponentSetting, ModelConfig


@pytest.fixture
def tiny_config():
    """Small geometry that keeps gradient and pipeline tests fast."""
    return ModelConfig(
        d=8, layers=1, heads=2, vocab=12, n_prototypes=6, top_k=2,
        compressed_tokens=2, dropout=0.0, horizon=3,
        patch_size=4, stride=2, n_patches=3,
    )


@pytest.fixture
def tiny_window():
    return WindowSpec(input_len=8, horizon=3, patch_size=4, stride=2)


@pytest.fixture
def desk_config():
    return ModelConfig()


def all_random_frozen():
    return {c: ComponentSetting("random", "frozen")
            for c in ("ln", "mha", "ffn", "emb")}
