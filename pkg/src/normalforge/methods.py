"""Name -> estimator registry shared by the CLI and the benchmark harness."""

from __future__ import annotations

from functools import partial
from typing import Callable, Dict, List

from . import baselines
from .core import ConfigurationError, DepthImage, DisparityImage, CameraIntrinsics, NormalMap
from .filters import AggregatorKind, GradientKernelKind
from .sne3f2n import ThreeFiltersConfig, estimate_from_depth, estimate_from_disparity

Estimator = Callable[[DepthImage, CameraIntrinsics], NormalMap]


def _three_filters_configs() -> Dict[str, ThreeFiltersConfig]:
    out = {}
    for kernel in GradientKernelKind:
        for agg in AggregatorKind:
            out[f"{kernel.value}-{agg.value}"] = ThreeFiltersConfig(kernel=kernel, aggregator=agg)
    return out


THREE_FILTERS = _three_filters_configs()

BASELINES: Dict[str, Estimator] = {
    "plane-svd": baselines.plane_svd,
    "plane-pca": baselines.plane_pca,
    "vector-svd": baselines.vector_svd,
    "area-weighted": baselines.area_weighted,
    "angle-weighted": baselines.angle_weighted,
    "fals": baselines.fals,
    "sri": baselines.sri,
    "line-mod": baselines.line_mod,
}

METHOD_NAMES: List[str] = list(THREE_FILTERS) + list(BASELINES)


def _named(fn, name):
    fn.__name__ = name
    return fn


def get_method(name: str) -> Estimator:
    """Depth-input estimator for a registry name such as ``fd-median`` or ``plane-svd``."""
    key = name.strip().lower()
    if key in THREE_FILTERS:
        return _named(partial(estimate_from_depth, cfg=THREE_FILTERS[key]), key)
    if key in BASELINES:
        return BASELINES[key]
    raise ConfigurationError(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")


def get_disparity_method(name: str) -> Callable[[DisparityImage, CameraIntrinsics], NormalMap]:
    """Disparity-input estimator; only the three-filter family works on disparity directly."""
    key = name.strip().lower()
    if key not in THREE_FILTERS:
        if key in BASELINES:
            raise ConfigurationError(f"method {name!r} does not accept disparity input")
        raise ConfigurationError(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")
    return _named(partial(estimate_from_disparity, cfg=THREE_FILTERS[key]), key)


def parse_method_list(spec: str) -> List[str]:
    """Comma-separated names, or ``all`` for the full registry."""
    if spec.strip().lower() == "all":
        return list(METHOD_NAMES)
    names = [s.strip().lower() for s in spec.split(",") if s.strip()]
    if not names:
        raise ConfigurationError("no methods given")
    for n in names:
        if n not in THREE_FILTERS and n not in BASELINES:
            raise ConfigurationError(f"unknown method {n!r}; choose from {', '.join(METHOD_NAMES)}")
    return names
