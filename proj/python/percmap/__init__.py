"""Python access to the percmap evaluator, Chamfer distance and target builders."""

from ._core import (
    __version__,
    chamfer_distance,
    evaluate,
    make_heatmap_target,
    rasterize_instances,
    py_chamfer,
    py_evaluate,
    py_rasterize,
)

__all__ = [
    "__version__",
    "chamfer_distance",
    "evaluate",
    "make_heatmap_target",
    "rasterize_instances",
    "py_chamfer",
    "py_evaluate",
    "py_rasterize",
]
