"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: schema/input problems exit
with 2, infeasible constructions with 3, and internal audit failures
(invariants that should hold by construction) with 4.
"""


class LiprotoError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(LiprotoError):
    """Malformed input file or parameter (bad JSON, wrong field, bad index)."""


class InvalidProtographError(LiprotoError):
    """A protograph or degree distribution violates its constraints."""


class InfeasibleError(LiprotoError):
    """A requested construction has no solution (quantization, repair, bracket)."""


class AuditError(LiprotoError):
    """A structural invariant that must hold by construction was violated."""
