import pytest

from mcsim.config import RunConfig, validate


def make_cfg(**kw):
    """RunConfig builder: dotted keys like scheduler_name override fields."""
    cfg = RunConfig()
    for key, value in kw.items():
        if key == "mapping":
            cfg.mapping = value
            continue
        section, _, field = key.partition("__")
        setattr(getattr(cfg, section), field, value)
    validate(cfg)
    return cfg


@pytest.fixture
def base_cfg():
    return make_cfg()


def tiny_geometry(cfg, channels=1):
    """Small address space so exhaustive checks stay cheap."""
    cfg.geometry.channels = channels
    cfg.geometry.ranks_per_channel = 2
    cfg.geometry.banks_per_rank = 4
    cfg.geometry.rows_per_bank = 16
    cfg.geometry.row_buffer_bytes = 512  # 8 blocks per row
    cfg.geometry.cache_block_bytes = 64
    return cfg
