"""Pansharpening methods and their name registry.

Every registered method has the signature
``method(hs, pan, sensor, **params) -> FusionResult``.
"""

from ._common import REGISTRY, fusion_method

METHOD_NAMES = (
    "exp", "gsa", "bt-h", "bdsd-pc", "pracs",
    "mtf-glp-fs", "mtf-glp-hpm", "mtf-glp-hpm-r", "awlp", "mf",
    "tv",
)
# names kept free for future model-based plug-ins
RESERVED_METHODS = ("hysure", "sr-d")

from . import cs, mra, tv  # noqa: E402  (populates REGISTRY)


def get_method(name: str):
    if name in RESERVED_METHODS:
        raise KeyError(f"method {name!r} is reserved but not implemented")
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown method {name!r}; registered: {', '.join(METHOD_NAMES)}") from None


def run_method(name: str, hs, pan, sensor, **params):
    return get_method(name)(hs, pan, sensor, **params)


__all__ = ["METHOD_NAMES", "RESERVED_METHODS", "REGISTRY", "fusion_method",
           "get_method", "run_method"]
