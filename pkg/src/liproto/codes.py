"""Bundled reference codes.

``ar4ja`` is the rate-1/2 AR4JA protograph (second variable node
punctured).  ``c1`` and ``c2`` are its locally irregular variants with
published optimized degree distributions for edge (3,4) and for edges
(2,2), (3,3), (3,4) respectively.  The published tables truncate rows
whose mass stays below 0.01 everywhere, so the raw masses neither sum
to one nor hit the exact target mean; the loader renormalizes over the
listed support, repairs the mean, and logs how much mass moved so the
adjustment is never silent.
"""

from __future__ import annotations

import json
import logging
from importlib import resources

import numpy as np

from .errors import SchemaError
from .protograph import IrregularProtograph, LocalDegreeDistribution, protograph_from_dict, validate

logger = logging.getLogger(__name__)

BUILTIN_NAMES = ("ar4ja", "c1", "c2")


def _load_data(name: str) -> dict:
    ref = resources.files("liproto").joinpath(f"data/{name}.json")
    return json.loads(ref.read_text())


def normalize_protograph(proto: IrregularProtograph, *, log: bool = True) -> IrregularProtograph:
    """Renormalize and mean-repair every distribution; return a valid protograph.

    No-op (same masses) for already-valid input.  Deltas are logged per
    edge as (missing mass before renormalization, total mass moved by
    the mean repair).
    """
    from .optimize import repair  # local import: optimize depends on protograph

    dists = {}
    for (i, j), dist in proto.dists.items():
        if dist.is_valid():
            dists[(i, j)] = dist
            continue
        missing = 1.0 - dist.total()
        repaired = repair(dist.masses, dist.target_degree, dist.d_max)
        moved = 0.5 * float(np.abs(repaired.masses - dist.masses / dist.total()).sum())
        if log:
            logger.info(
                "normalized distribution at edge (%d,%d): missing mass %.3e, "
                "mean repair moved %.3e", i + 1, j + 1, missing, moved,
            )
        dists[(i, j)] = repaired
    return IrregularProtograph(base=proto.base, dists=dists, name=proto.name)


def load_builtin(name: str) -> IrregularProtograph:
    """Load one of the bundled codes by name, repaired and validated."""
    key = name.lower()
    if key not in BUILTIN_NAMES:
        raise SchemaError(f"unknown builtin code {name!r}; available: {', '.join(BUILTIN_NAMES)}")
    proto = protograph_from_dict(_load_data(key), name=key)
    proto = normalize_protograph(proto)
    validate(proto).require()
    return proto


def ar4ja() -> IrregularProtograph:
    return load_builtin("ar4ja")


def code_c1() -> IrregularProtograph:
    return load_builtin("c1")


def code_c2() -> IrregularProtograph:
    return load_builtin("c2")
