"""Weighted graphs, translation-invariant tori and lattice Fourier helpers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class WeightedGraph:
    """Finite graph with symmetric edge weights ``beta`` and pinning field ``h``.

    Adjacency is kept in CSR form, so ``indices[indptr[i]:indptr[i+1]]`` is
    the sorted neighbour list of ``i`` and ``weights`` holds the matching
    ``beta[i, j]``. All arrays are read-only.
    """

    n_vertices: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    h: np.ndarray
    shape: tuple[int, ...] | None = field(default=None, compare=False)

    @classmethod
    def from_dense(cls, beta, h, shape=None) -> "WeightedGraph":
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
            raise GraphError("beta must be a square matrix")
        return cls.from_sparse(sp.csr_matrix(beta), h, shape=shape)

    @classmethod
    def from_sparse(cls, beta, h, shape=None) -> "WeightedGraph":
        beta = sp.csr_matrix(beta, dtype=float)
        beta.eliminate_zeros()
        beta.sort_indices()
        n = beta.shape[0]
        if beta.shape != (n, n):
            raise GraphError("beta must be square")
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        if beta.nnz and (beta.data < 0).any():
            raise GraphError("edge weights must be non-negative")
        if beta.nnz and abs(beta - beta.T).max() > 0:
            raise GraphError("beta must be symmetric")
        if beta.diagonal().any():
            raise GraphError("beta must have zero diagonal")
        h = np.broadcast_to(np.asarray(h, dtype=float), (n,)).copy()
        if not np.all(np.isfinite(h)) or (h < 0).any():
            raise GraphError("h must be finite and non-negative")
        if not np.all(np.isfinite(beta.data)):
            raise GraphError("edge weights must be finite")
        return cls(
            n_vertices=n,
            indptr=_frozen(beta.indptr.astype(np.int64)),
            indices=_frozen(beta.indices.astype(np.int64)),
            weights=_frozen(beta.data.astype(float)),
            h=_frozen(h),
            shape=shape,
        )

    @classmethod
    def from_edges(cls, n: int, edges: Mapping[tuple[int, int], float], h) -> "WeightedGraph":
        rows, cols, vals = [], [], []
        for (i, j), w in edges.items():
            if i == j:
                raise GraphError(f"self-loop at vertex {i}")
            rows += [i, j]
            cols += [j, i]
            vals += [w, w]
        beta = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return cls.from_sparse(beta, h)

    @classmethod
    def path(cls, n: int, beta: float = 1.0, h=1.0) -> "WeightedGraph":
        return cls.from_edges(n, {(i, i + 1): beta for i in range(n - 1)}, h)

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def beta_matrix(self) -> sp.csr_matrix:
        n = self.n_vertices
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(n, n))

    def dense_beta(self) -> np.ndarray:
        return self.beta_matrix().toarray()

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self):
        """Yield ``(i, j, beta_ij)`` once per undirected edge, ``i < j``."""
        for i in range(self.n_vertices):
            nb, w = self.neighbors(i)
            for j, b in zip(nb, w):
                if i < j:
                    yield i, int(j), float(b)

    def with_h(self, h) -> "WeightedGraph":
        return WeightedGraph(
            self.n_vertices, self.indptr, self.indices, self.weights,
            _frozen(np.broadcast_to(np.asarray(h, dtype=float), (self.n_vertices,)).copy()),
            self.shape,
        )


@dataclass(frozen=True)
class TorusSpec:
    """Translation-invariant finite-range weights on ``(Z/LZ)^d``."""

    d: int
    L: int
    range_weights: Mapping[tuple[int, ...], float]
    h: float = 1.0

    @classmethod
    def nearest_neighbour(cls, d: int, L: int, beta: float = 1.0, h: float = 1.0) -> "TorusSpec":
        rw = {}
        for axis in range(d):
            for sign in (1, -1):
                v = [0] * d
                v[axis] = sign
                rw[tuple(v)] = beta
        return cls(d, L, rw, h)

    def validate(self) -> None:
        if self.d not in (1, 2, 3):
            raise GraphError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.L < 1:
            raise GraphError("side length must be positive")
        if not self.range_weights:
            raise GraphError("range_weights is empty")
        for v, w in self.range_weights.items():
            if len(v) != self.d:
                raise GraphError(f"displacement {v} has wrong dimension")
            if not any(v):
                raise GraphError("zero displacement is not allowed")
            if not w > 0:
                raise GraphError(f"weight for {v} must be positive")
            neg = tuple(-c for c in v)
            if self.range_weights.get(neg) != w:
                raise GraphError(f"range_weights not symmetric under negation at {v}")
        reach = max(max(abs(c) for c in v) for v in self.range_weights)
        if 2 * reach >= self.L:
            raise GraphError(f"L={self.L} too small for range {reach}: torus edges collide")
        if not self.h > 0:
            raise GraphError("h must be positive")

    @property
    def n_vertices(self) -> int:
        return self.L ** self.d

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.L,) * self.d


def build_torus(spec: TorusSpec) -> WeightedGraph:
    spec.validate()
    dims = spec.dims
    n = spec.n_vertices
    coords = np.array(np.unravel_index(np.arange(n), dims)).T
    rows, cols, vals = [], [], []
    for v, w in spec.range_weights.items():
        nb = np.ravel_multi_index(((coords + np.array(v)) % spec.L).T, dims)
        rows.append(np.arange(n))
        cols.append(nb)
        vals.append(np.full(n, float(w)))
    beta = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return WeightedGraph.from_sparse(beta, spec.h, shape=dims)


def dual_lattice(spec: TorusSpec) -> np.ndarray:
    """Integer labels ``k`` of the dual points ``p = 2 pi k / L``.

    Rows are in C order (last axis fastest), the same order as
    ``np.fft.fftn(field.reshape(dims)).ravel()``.
    """
    return np.array(list(itertools.product(range(spec.L), repeat=spec.d)), dtype=np.int64)


def momenta(spec: TorusSpec) -> np.ndarray:
    return 2 * np.pi * dual_lattice(spec) / spec.L


def _as_dual_index(spec: TorusSpec, p) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (spec.d,):
        raise GraphError(f"momentum must have {spec.d} components")
    k = p * spec.L / (2 * np.pi)
    kr = np.rint(k)
    if np.abs(k - kr).max() > 1e-9:
        raise GraphError(f"{p} is not on the dual lattice of L={spec.L}")
    return kr.astype(np.int64) % spec.L


def lambda_of(spec: TorusSpec, p=None, *, k: Sequence[int] | None = None) -> float:
    """``sum_j beta_0j (1 - cos(p.j))``; pass either real ``p`` or integer ``k``."""
    spec.validate()
    if k is None:
        k = _as_dual_index(spec, p)
    k = np.asarray(k, dtype=np.int64) % spec.L
    total = 0.0
    for v, w in spec.range_weights.items():
        phase = 2 * np.pi * (int(np.dot(k, v)) % spec.L) / spec.L
        total += w * (1.0 - np.cos(phase))
    return max(total, 0.0)


def lambda_table(spec: TorusSpec) -> np.ndarray:
    return np.array([lambda_of(spec, k=k) for k in dual_lattice(spec)])


def quadratic_constant(spec: TorusSpec) -> float:
    """``C(beta) = 1/2 sum_j beta_0j |j|^2`` so that ``lambda(p) <= C |p|^2``."""
    return 0.5 * sum(w * float(np.dot(v, v)) for v, w in spec.range_weights.items())


def centered_momenta(spec: TorusSpec) -> np.ndarray:
    """Dual points folded into ``(-pi, pi]^d``, same order as :func:`dual_lattice`."""
    k = dual_lattice(spec)
    k = np.where(k > spec.L // 2, k - spec.L, k)
    return 2 * np.pi * k / spec.L
