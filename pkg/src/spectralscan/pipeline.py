"""End-to-end traversal construction from a patch feature map.

Composes the graph build, the sparse eigensolve and the plan sort, counting
flops per stage ("adjacency", "laplacian", "eigensolve", "plan") and timing
the whole construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .eigen import EigConfig, EigReport, SpectralBasis, lanczos_smallest
from .flops import FlopCounter, count
from .graph import GraphConfig, SparseSymMatrix, build_graph, flatten_features
from .patches import FeatureMap
from .traversal import TraversalPlan, build_plan


@dataclass
class TraversalBuild:
    plan: TraversalPlan
    basis: SpectralBasis
    adjacency: SparseSymMatrix
    laplacian: SparseSymMatrix
    sigma: float
    eig_report: EigReport
    counter: FlopCounter
    seconds: float


def build_traversal(
    fm: FeatureMap,
    graph_cfg: GraphConfig,
    eig_cfg: EigConfig,
    counter: FlopCounter | None = None,
) -> TraversalBuild:
    """Build the 2m traversal orders for a feature map."""
    counter = counter if counter is not None else FlopCounter()
    start = time.perf_counter()
    features = flatten_features(fm)
    adjacency, laplacian, sigma = build_graph(features, graph_cfg, counter)
    basis, report = lanczos_smallest(laplacian, eig_cfg, counter)
    # cube-sum direction statistic: 3n per eigenvector
    count(counter, "plan", 3 * basis.n * basis.m)
    plan = build_plan(basis, (fm.hp, fm.wp))
    seconds = time.perf_counter() - start
    return TraversalBuild(
        plan=plan,
        basis=basis,
        adjacency=adjacency,
        laplacian=laplacian,
        sigma=sigma,
        eig_report=report,
        counter=counter,
        seconds=seconds,
    )
