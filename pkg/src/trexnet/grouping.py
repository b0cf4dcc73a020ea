"""Discovery of correlated variable groups via single-linkage clustering.

Groups are found by agglomerating columns under the distance d = 1 - rho
(or 1 - |rho| with ``absolute=True``) and cutting the dendrogram at height
1 - rho_cut.  Single linkage guarantees that after the cut no two columns
from different groups have a correlation above rho_cut.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage as _scipy_linkage
from scipy.spatial.distance import squareform as _squareform

from .errors import ConfigError, InputError, NumericalError

GROUPS_SCHEMA = "trexnet-groups-v1"


@dataclass(frozen=True)
class Dendrogram:
    """Merge tree from single-linkage agglomeration over p leaves.

    Cluster ids follow the usual convention: ids 0..n_leaves-1 are leaves,
    and the cluster created by ``merges[i]`` has id n_leaves + i.  Merge
    heights are non-decreasing.
    """

    merges: tuple[tuple[int, int, float], ...]
    n_leaves: int

    def __post_init__(self) -> None:
        if self.n_leaves < 1:
            raise InputError("dendrogram needs at least one leaf")
        if len(self.merges) != self.n_leaves - 1:
            raise InputError(
                f"expected {self.n_leaves - 1} merges for {self.n_leaves} "
                f"leaves, got {len(self.merges)}"
            )
        seen: set[int] = set()
        prev = -np.inf
        for i, (a, b, h) in enumerate(self.merges):
            limit = self.n_leaves + i
            if not (0 <= a < limit and 0 <= b < limit) or a == b:
                raise InputError(f"merge {i} references invalid clusters ({a}, {b})")
            if a in seen or b in seen:
                raise InputError(f"merge {i} reuses an already merged cluster")
            seen.update((a, b))
            if h < prev - 1e-12:
                raise InputError("merge heights must be non-decreasing")
            prev = h


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint groups of column indices covering 0..p-1."""

    groups: tuple[tuple[int, ...], ...]
    p: int

    def __post_init__(self) -> None:
        flat = [j for g in self.groups for j in g]
        if not self.groups or any(len(g) == 0 for g in self.groups):
            raise InputError("every group must be non-empty")
        if len(flat) != self.p or set(flat) != set(range(self.p)):
            raise InputError("groups must be disjoint and cover all columns exactly once")

    @property
    def group_count(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    def membership(self) -> np.ndarray:
        """Array of length p mapping each column to its group index."""
        out = np.empty(self.p, dtype=np.intp)
        for m, g in enumerate(self.groups):
            out[list(g)] = m
        return out

    def support_vector(self, m: int) -> np.ndarray:
        """Binary indicator of group m's members, length p."""
        v = np.zeros(self.p)
        v[list(self.groups[m])] = 1.0
        return v

    def support_matrix(self) -> np.ndarray:
        """Stacked support vectors, one row per group."""
        rows = np.zeros((self.group_count, self.p))
        for m, g in enumerate(self.groups):
            rows[m, list(g)] = 1.0
        return rows

    def to_json(self, names: tuple[str, ...] | None = None) -> str:
        if names is not None and len(names) != self.p:
            raise InputError("names length must equal p")
        payload: dict = {
            "schema": GROUPS_SCHEMA,
            "p": self.p,
            "groups": [list(g) for g in self.groups],
        }
        if names is not None:
            payload["names"] = [[names[j] for j in g] for g in self.groups]
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GroupPartition":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid groups JSON: {exc}") from exc
        if not isinstance(payload, dict) or "groups" not in payload:
            raise InputError("groups JSON must be an object with a 'groups' list")
        groups = tuple(tuple(int(j) for j in g) for g in payload["groups"])
        p = int(payload.get("p", sum(len(g) for g in groups)))
        return cls(groups=groups, p=p)


def correlation_matrix(Xs: np.ndarray) -> np.ndarray:
    """Pairwise correlations of standardized columns, x_j.T @ x_j'.

    Columns must be zero-mean with unit norm; all-zero columns (from
    constant inputs) are tolerated and correlate 0 with everything.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    if Xs.ndim != 2:
        raise InputError("expected a 2-d matrix")
    norms = np.linalg.norm(Xs, axis=0)
    live = norms > 1e-12
    if np.any(np.abs(norms[live] - 1.0) > 1e-6):
        raise InputError("columns must be standardized to unit norm")
    means = Xs.mean(axis=0)
    if np.any(np.abs(means) > 1e-6):
        raise InputError("columns must be centered")
    corr = Xs.T @ Xs
    corr = 0.5 * (corr + corr.T)
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr


def correlation_distance(corr: np.ndarray, absolute: bool = False) -> np.ndarray:
    """Distance matrix 1 - rho (or 1 - |rho|), zero diagonal, entries >= 0."""
    corr = np.asarray(corr, dtype=np.float64)
    dist = 1.0 - (np.abs(corr) if absolute else corr)
    np.clip(dist, 0.0, None, out=dist)
    np.fill_diagonal(dist, 0.0)
    return dist


def single_linkage(dist: np.ndarray) -> Dendrogram:
    """Single-linkage dendrogram of a symmetric distance matrix."""
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise InputError("distance matrix must be square")
    if not np.all(np.isfinite(dist)):
        raise InputError("distance matrix must be finite")
    if np.max(np.abs(dist - dist.T), initial=0.0) > 1e-10:
        raise InputError("distance matrix must be symmetric")
    if np.max(np.abs(np.diag(dist)), initial=0.0) > 1e-10:
        raise InputError("distance matrix must have a zero diagonal")
    if dist.min(initial=0.0) < -1e-10:
        raise InputError("distances must be non-negative")
    p = dist.shape[0]
    if p == 1:
        return Dendrogram(merges=(), n_leaves=1)
    condensed = _squareform(np.clip(dist, 0.0, None), checks=False)
    z = _scipy_linkage(condensed, method="single")
    merges = tuple((int(row[0]), int(row[1]), float(row[2])) for row in z)
    return Dendrogram(merges=merges, n_leaves=p)


def cut_by_correlation(dend: Dendrogram, rho_cut: float) -> GroupPartition:
    """Cut a 1-rho dendrogram at height 1 - rho_cut into flat groups.

    Merges at height exactly 1 - rho_cut are applied, so two columns end up
    in the same group iff their single-linkage distance is <= 1 - rho_cut.
    """
    if not (0.0 < rho_cut < 1.0):
        raise ConfigError(f"rho_cut must lie in (0, 1), got {rho_cut}")
    height = 1.0 - rho_cut
    members: dict[int, list[int]] = {i: [i] for i in range(dend.n_leaves)}
    for i, (a, b, h) in enumerate(dend.merges):
        if h > height:
            break
        members[dend.n_leaves + i] = members.pop(a) + members.pop(b)
    groups = sorted((sorted(g) for g in members.values()), key=lambda g: g[0])
    return GroupPartition(groups=tuple(tuple(g) for g in groups), p=dend.n_leaves)


def max_intergroup_correlation(part: GroupPartition, corr: np.ndarray,
                               absolute: bool = False) -> float:
    """Largest correlation between columns of different groups."""
    corr = np.asarray(corr, dtype=np.float64)
    if corr.shape != (part.p, part.p):
        raise InputError("correlation matrix does not match the partition")
    if part.group_count == 1:
        return -np.inf
    labels = part.membership()
    inter = labels[:, None] != labels[None, :]
    vals = np.abs(corr[inter]) if absolute else corr[inter]
    return float(vals.max())


def groups_from_correlation(corr: np.ndarray, rho_cut: float,
                            absolute: bool = False,
                            verify: bool = True) -> GroupPartition:
    """Cluster columns so that inter-group correlation never exceeds rho_cut."""
    dend = single_linkage(correlation_distance(corr, absolute=absolute))
    part = cut_by_correlation(dend, rho_cut)
    if verify:
        worst = max_intergroup_correlation(part, corr, absolute=absolute)
        if worst > rho_cut + 1e-10:
            raise NumericalError(
                f"cut left an inter-group correlation of {worst:.6f} above "
                f"{rho_cut}"
            )
    return part
