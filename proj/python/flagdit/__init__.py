"""Python bindings for the flagdit core library."""

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    LayoutError,
    Model,
    StructureError,
    channel_normalize,
    classify_pattern,
    layout_for,
    make_pattern_image,
    make_time_grid,
    ntk_scale_base,
    proportional_scale,
    roundtrip,
    time_shift,
    token_kinds,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FormatError",
    "LayoutError",
    "Model",
    "StructureError",
    "channel_normalize",
    "classify_pattern",
    "layout_for",
    "make_pattern_image",
    "make_time_grid",
    "ntk_scale_base",
    "proportional_scale",
    "roundtrip",
    "time_shift",
    "token_kinds",
]
