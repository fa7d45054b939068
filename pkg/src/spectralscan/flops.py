"""Per-stage floating-point operation accounting.

Counts are analytic (incremented at call sites from closed-form formulas),
not instrumented, so enabling a counter does not perturb the hot paths.

Op table
--------
add, sub, mul, div, sqrt, exp      1 each
fused multiply-add (dot/axpy/gemv accumulation)   2 per element pair
squared distance of a C-vector pair               3C - 1   (C sub, C mul, C-1 add)
Euclidean distance                                3C       (+1 sqrt)
Gaussian edge weight from a known squared dist    2        (scale mul, exp)
CSR matrix-vector product                         2 * nnz
dot product / axpy of length n                    2n
vector 2-norm of length n                         2n + 1
Sturm sequence evaluation on a k-tridiagonal      4k
tridiagonal LU factor + solve (pivoted)           10k
Jacobi rotation on an n x n matrix (with vectors) 12n + 12

Comparisons, permutations and copies are not floating-point work and count
zero. Stage names used by the traversal pipeline: "adjacency", "laplacian",
"eigensolve", "plan". The SSM forward pass accumulates under "scan".
"""

from __future__ import annotations


class FlopCounter:
    """Accumulates op counts keyed by pipeline stage."""

    def __init__(self):
        self.stages: dict[str, int] = {}

    def add(self, stage: str, count: int) -> None:
        self.stages[stage] = self.stages.get(stage, 0) + int(count)

    def get(self, stage: str) -> int:
        return self.stages.get(stage, 0)

    def total(self) -> int:
        return sum(self.stages.values())

    def reset(self) -> None:
        self.stages.clear()


def count(counter: FlopCounter | None, stage: str, ops: int) -> None:
    """Increment `counter` if counting is enabled; no-op otherwise."""
    if counter is not None:
        counter.add(stage, ops)
