"""Greedy distribution of common-stream rates to users against QoS targets.

The procedure is piecewise linear in its rate inputs.  :func:`allocation_affine`
runs it on :class:`Affine` values, which record the linear map realized by the
branches taken at the current point; the meta-loss uses that map to pass
gradients through the allocation with the branch decisions held fixed.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentGrouping


@dataclass
class AllocationInput:
    common: float  # committed global common rate
    group: np.ndarray  # committed rate per group
    private: np.ndarray  # per user
    thresholds: np.ndarray  # per user QoS targets

    def __post_init__(self):
        self.group = np.asarray(self.group, dtype=float)
        self.private = np.asarray(self.private, dtype=float)
        self.thresholds = np.asarray(self.thresholds, dtype=float)


@dataclass
class AllocationResult:
    allocated: np.ndarray

    def deficient(self, thresholds):
        return self.allocated - np.asarray(thresholds) < 0


class Affine:
    """A float together with its coefficients over the allocation inputs."""

    __slots__ = ("value", "coef", "const")

    def __init__(self, value, coef, const=0.0):
        self.value = value
        self.coef = coef
        self.const = const

    def __add__(self, other):
        if isinstance(other, Affine):
            return Affine(self.value + other.value, self.coef + other.coef, self.const + other.const)
        return Affine(self.value + other, self.coef, self.const + other)

    def __radd__(self, other):
        return Affine(other + self.value, self.coef, other + self.const)

    def __sub__(self, other):
        if isinstance(other, Affine):
            return Affine(self.value - other.value, self.coef - other.coef, self.const - other.const)
        return Affine(self.value - other, self.coef, self.const - other)

    def __rsub__(self, other):
        return Affine(other - self.value, -self.coef, other - self.const)

    def __truediv__(self, n):
        return Affine(self.value / n, self.coef / n, self.const / n)


def _v(x):
    return x.value if isinstance(x, Affine) else x


def _fill(alloc, th, users, budget):
    """Top up deficient ``users`` in order from ``budget``; return the leftover."""
    for k in users:
        if _v(alloc[k]) - th[k] < 0:
            need = th[k] - alloc[k]
            if _v(budget) > _v(need):
                budget = budget - need
                alloc[k] = alloc[k] + need
            else:
                alloc[k] = alloc[k] + budget
                budget = 0.0
                break
    return budget


def _n_deficient(alloc, th):
    return sum(1 for a, t in zip(alloc, th) if _v(a) - t < 0)


def _run(common, group, private, th, members):
    alloc = list(private)
    K = len(alloc)
    if _n_deficient(alloc, th) > 0:
        for g, users in enumerate(members):
            avail = _fill(alloc, th, users, group[g])
            if _v(avail) > 0:
                share = avail / len(users)
                for k in users:
                    alloc[k] = alloc[k] + share
        if _n_deficient(alloc, th) > 0:
            avail = _fill(alloc, th, range(K), common)
            if _v(avail) > 0:
                share = avail / K
                for k in range(K):
                    alloc[k] = alloc[k] + share
        else:
            for k in range(K):
                alloc[k] = alloc[k] + common / K
    else:
        for g, users in enumerate(members):
            for k in users:
                alloc[k] = alloc[k] + group[g] / len(users)
        for k in range(K):
            alloc[k] = alloc[k] + common / K
    return alloc


def _validate(inp, layout):
    if len(inp.group) != layout.n_groups:
        raise InconsistentGrouping(
            f"{len(inp.group)} group rates for a layout with {layout.n_groups} groups")
    if len(inp.private) != layout.n_users or len(inp.thresholds) != layout.n_users:
        raise InconsistentGrouping("per-user inputs do not match the layout")


def allocate_common_rates(inp, layout):
    _validate(inp, layout)
    th = [float(t) for t in inp.thresholds]
    alloc = _run(float(inp.common), [float(x) for x in inp.group],
                 [float(x) for x in inp.private], th, layout.members)
    return AllocationResult(np.array(alloc, dtype=float))


def allocation_affine(inp, layout):
    """Linear map realized by the allocation at ``inp``.

    Returns ``(A, b, values)`` with ``allocated = A @ [common, group..., private...] + b``
    on the branch taken at ``inp``; ``values`` are the allocations themselves.
    """
    _validate(inp, layout)
    G, K = layout.n_groups, layout.n_users
    n = 1 + G + K
    basis = np.eye(n)
    common = Affine(float(inp.common), basis[0])
    group = [Affine(float(x), basis[1 + g]) for g, x in enumerate(inp.group)]
    private = [Affine(float(x), basis[1 + G + k]) for k, x in enumerate(inp.private)]
    th = [float(t) for t in inp.thresholds]
    alloc = _run(common, group, private, th, layout.members)
    A = np.zeros((K, n))
    b = np.zeros(K)
    for k, a in enumerate(alloc):
        if isinstance(a, Affine):
            A[k], b[k] = a.coef, a.const
        else:
            b[k] = a
    return A, b, np.array([_v(a) for a in alloc], dtype=float)
