"""Online clustering gate for predicted weight vectors.

Every prediction is assigned to the nearest centroid, or founds a new
cluster when all centroids are farther than ``tau``. The assigned centroid
becomes the running mean of its members. The active weight vector is only
replaced when the assigned cluster differs from the active one, so small
wobbles in the prediction do not restart adaptation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .gfanc import WeightVector

DEFAULT_TAU = 0.6


@dataclass
class Assignment:
    """One row of the cluster event log."""

    frame_index: int
    k_prime: int
    n_clusters: int
    min_distance: float  # inf when there was no centroid yet
    updated: bool = False
    new_cluster: bool = False


@dataclass
class ClusterState:
    tau: float = DEFAULT_TAU
    centroids: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    current_index: int = 0
    log: list = field(default_factory=list)
    members: list = field(default_factory=list)  # (k, g') per assignment, for replay checks

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigurationError(f"tau must be non-negative, got {self.tau}")

    @property
    def k(self) -> int:
        return len(self.centroids)

    def reset(self) -> None:
        self.centroids.clear()
        self.counts.clear()
        self.log.clear()
        self.members.clear()
        self.current_index = 0

    def cluster_assign(self, g_prime: WeightVector) -> int:
        """Return the 1-based cluster index of ``g_prime`` and update centroids."""
        g = np.asarray(g_prime.g, dtype=np.float64)
        if self.centroids and g.shape[0] != self.centroids[0].shape[0]:
            raise ConfigurationError(
                f"weight vector has {g.shape[0]} entries, centroids have {self.centroids[0].shape[0]}"
            )
        if self.centroids:
            distances = np.linalg.norm(np.vstack(self.centroids) - g, axis=1)
            j = int(np.argmin(distances))  # first minimum wins ties
            min_distance = float(distances[j])
        else:
            min_distance = float("inf")

        if not self.centroids or min_distance > self.tau:
            self.centroids.append(g.copy())
            self.counts.append(1)
            k_prime = self.k
            new = True
        else:
            n = self.counts[j]
            self.centroids[j] = (n * self.centroids[j] + g) / (n + 1)
            self.counts[j] = n + 1
            k_prime = j + 1
            new = False
        self.members.append((k_prime, g.copy()))
        self.log.append(Assignment(len(self.log), k_prime, self.k, min_distance, new_cluster=new))
        return k_prime

    def gated_update(self, g_current: WeightVector, g_prime: WeightVector) -> tuple[WeightVector, bool]:
        """Replace the active weights only when the cluster index changes."""
        k_prime = self.cluster_assign(g_prime)
        updated = k_prime != self.current_index
        self.log[-1].updated = updated
        if updated:
            self.current_index = k_prime
            return g_prime, True
        return g_current, False

    def log_rows(self) -> list[tuple]:
        """Event log as ``(frame_index, k_prime, K, min_distance, updated)`` tuples."""
        return [(a.frame_index, a.k_prime, a.n_clusters, a.min_distance, int(a.updated)) for a in self.log]


def cluster_assign(state: ClusterState, g_prime: WeightVector) -> int:
    return state.cluster_assign(g_prime)


def gated_update(state: ClusterState, g_current: WeightVector, g_prime: WeightVector):
    return state.gated_update(g_current, g_prime)
