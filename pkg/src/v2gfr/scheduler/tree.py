"""Scenario tree branching once at the root into one chain per quantile."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class TreeNode:
    id: int
    parent: Optional[int]
    prob: float
    dtau: float       # hours
    offset: int       # hours after the root hour
    branch: int       # -1 for the root
    demand: float
    wind: float
    solar: float


@dataclass
class ScenarioTree:
    nodes: List[TreeNode]
    quantiles: tuple

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def children(self, node_id: int) -> List[TreeNode]:
        return [n for n in self.nodes if n.parent == node_id]

    def __len__(self):
        return len(self.nodes)


def branch_weights(quantiles: Sequence[float]) -> np.ndarray:
    """Midpoint weights ``(q[k+1] - q[k-1]) / 2`` padded with 0 and 1, normalised.

    Without the final normalisation the weights sum to
    ``(1 + q[-1] - q[0]) / 2``, just short of one for tail quantiles.
    """
    q = np.concatenate([[0.0], np.asarray(quantiles, dtype=float), [1.0]])
    w = (q[2:] - q[:-2]) / 2.0
    return w / w.sum()


def build_tree(quantiles: Sequence[float], root: dict, branches: dict) -> ScenarioTree:
    """Root node plus ``len(quantiles)`` chains.

    ``root`` maps ``demand/wind/solar`` to floats; ``branches`` maps them to
    arrays shaped ``(len(quantiles), horizon)``.
    """
    for key in ("demand", "wind", "solar"):
        if key not in root or key not in branches:
            raise ValueError(f"forecast missing {key!r}")
    nq = len(quantiles)
    shapes = {np.shape(branches[k]) for k in ("demand", "wind", "solar")}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2 or next(iter(shapes))[0] != nq:
        raise ValueError(f"branch arrays must share shape ({nq}, horizon), got {shapes}")
    horizon = next(iter(shapes))[1]
    for k in ("demand", "wind", "solar"):
        if not np.all(np.isfinite(branches[k])) or not np.isfinite(root[k]):
            raise ValueError(f"forecast {k!r} has non-finite values")
    w = branch_weights(quantiles)
    nodes = [TreeNode(0, None, 1.0, 1.0, 0, -1, float(root["demand"]), float(root["wind"]),
                      float(root["solar"]))]
    for b in range(nq):
        parent = 0
        for h in range(horizon):
            nid = len(nodes)
            nodes.append(TreeNode(nid, parent, float(w[b]), 1.0, h + 1, b,
                                  float(branches["demand"][b, h]), float(branches["wind"][b, h]),
                                  float(branches["solar"][b, h])))
            parent = nid
    return ScenarioTree(nodes, tuple(quantiles))
