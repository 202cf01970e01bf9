"""Information decomposition: exact discrete oracles and a differentiable surrogate.

Two backends with deliberately different jobs.  The plug-in backend works on
small discrete joints (or quantized sample summaries) where entropies are
exact sums; every result is in bits.  The Gaussian backend projects each
variable to a few dimensions with frozen random matrices and evaluates
log-determinant mutual information on the ridged sample covariance; it is
differentiable through the target variable and reports nats.

Interaction information has two classical-looking routes through the unique /
redundant / synergetic decomposition used here:

    chain route:  II = I(X1,X2;Y) - I(X1;Y) - I(X2;Y)
                     = I(X1;Y|X2) - I(X1;Y)
    S - R route:  II = synergy - redundancy, with redundancy taken to be
                  I(X1;X2) and synergy the additivity remainder.

The chain route is what interaction_info returns (XOR gives +1 bit, a triple
copy gives -1 bit).  The S - R route is reported alongside in PidResult; with
redundancy defined as source correlation the two disagree on joints like XOR,
so identities are only ever asserted against their own defining formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DistributionError, NumericError, UsageError
from .numerics import Rng, Tensor, autodiff as ops, gaussian_matrix

LN2 = math.log(2.0)

_SUMMARIZER_SEED = 0x5EED_BA5E

_AXIS_NAMES = {"x1": 0, "x2": 1, "y": 2}


@dataclass(frozen=True)
class JointDistribution:
    """pmf over (x1, x2, y) triples; axis order is fixed as x1, x2, y."""

    pmf: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=np.float64)
        if p.ndim != 3:
            raise DistributionError(f"joint pmf must be 3-D, got ndim={p.ndim}")
        if p.size == 0:
            raise DistributionError("joint pmf cannot be empty")
        if p.min() < 0.0:
            raise DistributionError(f"negative probability mass {p.min()}")
        total = math.fsum(p.ravel().tolist())
        if abs(total - 1.0) > 1e-12:
            raise DistributionError(f"pmf sums to {total}, not 1")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "pmf", p)

    @property
    def cardinalities(self):
        return self.pmf.shape


@dataclass(frozen=True)
class SampleBatch:
    """n paired samples of real vectors (x1, x2, y); y may be a Tensor."""

    x1: np.ndarray
    x2: np.ndarray
    y: object

    def __post_init__(self):
        x1 = np.atleast_2d(np.asarray(self.x1, dtype=np.float64))
        x2 = np.atleast_2d(np.asarray(self.x2, dtype=np.float64))
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        ydata = self.y.data if isinstance(self.y, Tensor) else np.asarray(self.y)
        if ydata.ndim == 1:
            ydata = ydata.reshape(-1, 1)
            if not isinstance(self.y, Tensor):
                object.__setattr__(self, "y", ydata.astype(np.float64))
        n = x1.shape[0]
        if n < 2:
            raise DimensionError(f"sample batch needs n >= 2, got {n}")
        if x2.shape[0] != n or ydata.shape[0] != n:
            raise DimensionError(
                f"inconsistent sample counts: {n}, {x2.shape[0]}, {ydata.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.x1.shape[0]

    def y_data(self) -> np.ndarray:
        return self.y.data if isinstance(self.y, Tensor) else np.asarray(self.y, dtype=np.float64)


def entropy(pmf) -> float:
    """Shannon entropy in bits; 0 log 0 = 0."""
    p = np.asarray(pmf, dtype=np.float64).ravel()
    if p.size and p.min() < 0.0:
        raise DistributionError(f"negative probability mass {p.min()}")
    total = math.fsum(p.tolist())
    if abs(total - 1.0) > 1e-9:
        raise DistributionError(f"pmf sums to {total}, not 1")
    nz = p[p > 0.0]
    return -math.fsum((nz * np.log2(nz)).tolist())


def _axes(group) -> tuple:
    if isinstance(group, (int, str, np.integer)):
        group = (group,)
    out = []
    for g in group:
        ax = _AXIS_NAMES[g] if isinstance(g, str) else int(g)
        if ax not in (0, 1, 2):
            raise UsageError(f"variable index {ax} outside x1=0, x2=1, y=2")
        out.append(ax)
    if len(set(out)) != len(out):
        raise UsageError(f"repeated variable in group {group}")
    return tuple(out)


def _grouped(pmf: np.ndarray, *groups) -> np.ndarray:
    """Marginalize axes outside the groups, then reshape to one axis per group."""
    keep = [ax for g in groups for ax in g]
    drop = tuple(ax for ax in range(3) if ax not in keep)
    p = pmf.sum(axis=drop) if drop else pmf
    order = sorted(keep)
    p = np.transpose(p, [order.index(ax) for ax in keep])
    dims = []
    at = 0
    for g in groups:
        size = 1
        for _ in g:
            size *= pmf.shape[keep[at]]
            at += 1
        dims.append(size)
    return p.reshape(dims)


def _mi2(p: np.ndarray) -> float:
    """Plug-in MI in bits of a 2-D joint pmf (need not be normalized checks)."""
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    mask = p > 0.0
    if not mask.any():
        return 0.0
    ratio = p[mask] / np.outer(pa, pb)[mask]
    return math.fsum((p[mask] * np.log2(ratio)).tolist())


def _disjoint(*groups) -> None:
    seen = set()
    for g in groups:
        if not g:
            raise UsageError("variable group cannot be empty")
        if seen & set(g):
            raise UsageError(f"variable groups overlap: {groups}")
        seen |= set(g)


def mutual_info(joint: JointDistribution, group_a, group_b) -> float:
    """I(A;B) in bits between two disjoint variable groups of the joint."""
    a, b = _axes(group_a), _axes(group_b)
    _disjoint(a, b)
    return _mi2(_grouped(joint.pmf, a, b))


def cond_mutual_info(joint: JointDistribution, group_a, group_b, group_c) -> float:
    """I(A;B|C) in bits: expectation over C of MI(A;B | C=c).

    Conditioning events of zero probability contribute zero.  An empty C
    reduces to plain mutual information.
    """
    a, b = _axes(group_a), _axes(group_b)
    c = () if group_c is None else _axes(group_c)
    if not c:  # empty conditioning set, not axis 0
        return mutual_info(joint, group_a, group_b)
    _disjoint(a, b, c)
    p3 = _grouped(joint.pmf, a, b, c)
    terms = []
    for k in range(p3.shape[2]):
        w = p3[:, :, k].sum()
        if w > 0.0:
            terms.append(w * _mi2(p3[:, :, k] / w))
    return math.fsum(terms)


@dataclass(frozen=True)
class PidResult:
    """Unique / redundant / synergetic split of I(X1,X2;Y), all in bits.

    ``interaction`` is the chain-route value (+1 for XOR); ``interaction_sr``
    is synergy - redundancy, which differs whenever the sources are
    correlated or the joint is synergy-dominated.
    """

    unique1: float
    unique2: float
    redundancy: float
    synergy: float
    total: float
    interaction: float
    interaction_sr: float


def pid_decompose(joint: JointDistribution) -> PidResult:
    """Split I(X1,X2;Y) into unique, redundant, and synergetic parts.

    unique1 = I(X1;Y|X2), unique2 = I(X2;Y|X1), redundancy = I(X1;X2),
    synergy = the additivity remainder.  Both interaction-information routes
    are reported; see the module docstring for why they can differ.
    """
    u1 = cond_mutual_info(joint, 0, 2, 1)
    u2 = cond_mutual_info(joint, 1, 2, 0)
    r = mutual_info(joint, 0, 1)
    total = mutual_info(joint, (0, 1), 2)
    s = total - u1 - u2 - r
    chain = total - mutual_info(joint, 1, 2) - mutual_info(joint, 0, 2)
    return PidResult(u1, u2, r, s, total, chain, s - r)


def interaction_info(joint: JointDistribution) -> float:
    """Interaction information in bits via the chain route.

    Computed two ways, I(X1,X2;Y) - I(X2;Y) - I(X1;Y) and
    I(X1;Y|X2) - I(X1;Y); the two are a chain-rule identity, so they are
    asserted to agree within 1e-9 before either is returned.
    """
    route_a = (
        mutual_info(joint, (0, 1), 2)
        - mutual_info(joint, 1, 2)
        - mutual_info(joint, 0, 2)
    )
    route_b = cond_mutual_info(joint, 0, 2, 1) - mutual_info(joint, 0, 2)
    if abs(route_a - route_b) > 1e-9:
        raise NumericError(
            f"interaction-information routes disagree: {route_a} vs {route_b}"
        )
    return route_a


def projection_summarizer(dim: int, seed: int):
    """Scalar summarizer: first coordinate of a frozen random projection."""
    row = gaussian_matrix(1, dim, Rng(seed))[0]

    def summarize(v) -> float:
        return float(np.dot(np.asarray(v, dtype=np.float64), row))

    return summarize


def _bin_indices(s: np.ndarray, bins: int):
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return np.zeros(s.size, dtype=np.intp), 1
    idx = np.floor((s - lo) / (hi - lo) * bins).astype(np.intp)
    return np.minimum(idx, bins - 1), bins


def quantize(batch: SampleBatch, bins: int, summarizer=None) -> JointDistribution:
    """Empirical joint pmf of scalar summaries on an equal-width grid.

    Each variable is reduced to a scalar (default: a frozen random
    projection, one independent row per variable) and binned over its own
    observed range.  A constant variable collapses to a single bin.
    """
    if bins < 2:
        raise UsageError(f"need at least 2 bins, got {bins}")
    arrs = [batch.x1, batch.x2, batch.y_data()]
    root = Rng(_SUMMARIZER_SEED)
    scalars = []
    for i, a in enumerate(arrs):
        if summarizer is None:
            # one frozen projection row per variable, from child generators
            row = gaussian_matrix(1, a.shape[1], root.split(i))[0]
            scalars.append(a @ row)
        else:
            scalars.append(np.asarray([float(summarizer(v)) for v in a]))
    idx, sizes = [], []
    for s in scalars:
        i, nb = _bin_indices(s, bins)
        idx.append(i)
        sizes.append(nb)
    flat = (idx[0] * sizes[1] + idx[1]) * sizes[2] + idx[2]
    counts = np.bincount(flat, minlength=sizes[0] * sizes[1] * sizes[2])
    pmf = counts.reshape(sizes).astype(np.float64) / batch.n
    return JointDistribution(pmf)


def interaction_info_plugin(batch: SampleBatch, bins: int = 16) -> float:
    """Quantized plug-in interaction information in bits (monitoring only)."""
    return interaction_info(quantize(batch, bins))


def gaussian_mi(cov, dims_a, dims_b):
    """Gaussian MI in nats from a covariance matrix: half a log-det contrast.

    Returns a Tensor when given one (differentiable through cov), else a
    float.  Requires the covariance restricted to each group to be positive
    definite; callers add their own ridge first.
    """
    t = cov if isinstance(cov, Tensor) else Tensor(np.asarray(cov, dtype=np.float64))
    if t.data.ndim != 2 or t.data.shape[0] != t.data.shape[1]:
        raise DimensionError(f"covariance must be square, got {t.data.shape}")
    a = [int(i) for i in np.atleast_1d(dims_a)]
    b = [int(i) for i in np.atleast_1d(dims_b)]
    if not a or not b:
        raise UsageError("dimension groups cannot be empty")
    if set(a) & set(b):
        raise UsageError(f"dimension groups overlap: {a} and {b}")
    n = t.data.shape[0]
    if any(i < 0 or i >= n for i in a + b):
        raise UsageError(f"dimension index outside covariance of size {n}")
    ld_a = ops.logdet_spd(ops.gather2d(t, a, a))
    ld_b = ops.logdet_spd(ops.gather2d(t, b, b))
    ld_ab = ops.logdet_spd(ops.gather2d(t, a + b, a + b))
    out = ops.scale(ops.add(ops.add(ld_a, ld_b), ops.scale(ld_ab, -1.0)), 0.5)
    return out if isinstance(cov, Tensor) else float(out.data)


@dataclass(frozen=True)
class ProjectionSet:
    """Frozen random projections (one per variable) shared across batches."""

    p1: np.ndarray
    p2: np.ndarray
    py: np.ndarray

    @property
    def dim(self) -> int:
        return self.p1.shape[0]


def build_projections(d: int, in_dims, seed: int) -> ProjectionSet:
    """d-row Gaussian projection per variable, from child generators of seed."""
    if d < 1:
        raise UsageError(f"projection dim must be positive, got {d}")
    root = Rng(seed)
    mats = []
    for i, dim in enumerate(in_dims):
        m = gaussian_matrix(d, dim, root.split(i))
        m.setflags(write=False)
        mats.append(m)
    return ProjectionSet(*mats)


def interaction_info_gaussian(batch: SampleBatch, proj: ProjectionSet, ridge: float = 1e-6):
    """Differentiable interaction information surrogate, in nats.

    Projects each variable to proj.dim dimensions, forms the ridged sample
    covariance of the stacked summaries, and returns the chain-route contrast
    I(X1,X2;Y) - I(X2;Y) - I(X1;Y).  The projections of x1 and x2 enter as
    constants, so the gradient flows through y alone.  Returns a Tensor when
    batch.y is one, else a float.
    """
    d = proj.dim
    if batch.n <= 3 * d + 2:
        raise NumericError(f"batch of {batch.n} too small for projection dim {d}")
    if ridge < 0.0:
        raise NumericError(f"ridge must be nonnegative, got {ridge}")
    u1 = batch.x1 @ proj.p1.T
    u2 = batch.x2 @ proj.p2.T
    y = batch.y if isinstance(batch.y, Tensor) else Tensor(batch.y_data())
    uy = ops.matmul(y, Tensor(proj.py.T))
    stack = ops.concat([Tensor(u1), Tensor(u2), uy], axis=1)
    n = batch.n
    ones = Tensor(np.ones((n, 1)))
    mean = ops.scale(ops.matmul(Tensor(np.ones((1, n))), stack), 1.0 / n)
    centered = ops.add(stack, ops.scale(ops.matmul(ones, mean), -1.0))
    cov = ops.scale(ops.matmul(ops.transpose(centered), centered), 1.0 / (n - 1))
    cov = ops.add(cov, Tensor(ridge * np.eye(3 * d)))
    g1 = list(range(0, d))
    g2 = list(range(d, 2 * d))
    gy = list(range(2 * d, 3 * d))
    ii = ops.add(
        gaussian_mi(cov, g1 + g2, gy),
        ops.scale(ops.add(gaussian_mi(cov, g2, gy), gaussian_mi(cov, g1, gy)), -1.0),
    )
    return ii if isinstance(batch.y, Tensor) else float(ii.data)
