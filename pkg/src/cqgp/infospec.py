"""Information-spectrum functionals and their single-letter oracles.

Classical side: information densities of word pairs, exact tail
probabilities of the per-symbol information density (computed by convolving
the finite per-letter distribution, never by sampling), and typical-set
membership. Quantum side: trace curves of the threshold test between n-fold
states, with a block-structured fast path for classical-quantum product
ensembles. Single-letter mutual information and the Holevo quantity serve as
iid oracles for rate setting.

All logarithms are base 2; rates are bits per channel use. The finite-n
estimators report curves plus a crossing summary; the threshold slack gamma
is always an explicit parameter and values are reported per gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .qop import DensityOperator, HermitianOperator, spectral_test, tensor_power_mat

_KEY_DECIMALS = 10
MONOTONE_ATOL = 1e-9


@dataclass(frozen=True)
class ClassicalPair:
    """Per-letter joint pmf of a pair of classical variables at block length n."""

    joint: np.ndarray
    n: int

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float)
        if joint.ndim != 2 or joint.size == 0:
            raise ValidationError("ClassicalPair: joint must be a 2-d pmf array")
        if (joint < 0).any():
            raise ValidationError("ClassicalPair: joint has negative entries")
        if abs(float(joint.sum()) - 1.0) > 1e-12:
            raise ValidationError(
                f"ClassicalPair: joint sums to {float(joint.sum())!r}, not 1 within 1e-12"
            )
        if int(self.n) < 1:
            raise ValidationError("ClassicalPair: n must be >= 1")
        joint = joint.copy()
        joint.setflags(write=False)
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "n", int(self.n))

    def marginal_a(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.joint.sum(axis=0)


def _ratio_table(pair: ClassicalPair) -> np.ndarray:
    pa, pb = pair.marginal_a(), pair.marginal_b()
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.log2(pair.joint) - np.log2(pa)[:, None] - np.log2(pb)[None, :]
    table[pair.joint <= 0.0] = -np.inf
    return table


def information_density(pair: ClassicalPair, a_word, b_word) -> float:
    """Per-symbol information density of a word pair, in bits per symbol.

    (1/n) sum_i log2[ p(a_i, b_i) / (p(a_i) p(b_i)) ]; raises on words with
    zero joint probability.
    """
    a = np.asarray(a_word, int)
    b = np.asarray(b_word, int)
    if a.shape != (pair.n,) or b.shape != (pair.n,):
        raise ValidationError(f"expected two length-{pair.n} words")
    table = _ratio_table(pair)
    vals = table[a, b]
    if np.isneginf(vals).any():
        raise ValidationError("word pair has zero probability under the joint pmf")
    return float(vals.sum()) / pair.n


def convolve_atoms(values, weights, n: int):
    """Distribution of the sum of n iid copies of a finite real-valued atom set.

    Returns (values, weights) arrays with values merged after rounding to
    10 decimal places. Zero-weight atoms are dropped.
    """
    acc = {0.0: 1.0}
    step = {}
    for v, w in zip(values, weights):
        if w <= 0.0:
            continue
        key = round(float(v), _KEY_DECIMALS)
        step[key] = step.get(key, 0.0) + float(w)
    for _ in range(n):
        nxt = {}
        for sv, sw in acc.items():
            for v, w in step.items():
                key = round(sv + v, _KEY_DECIMALS)
                nxt[key] = nxt.get(key, 0.0) + sw * w
        acc = nxt
    vals = np.array(sorted(acc))
    return vals, np.array([acc[v] for v in vals])


def tail_probability(pair: ClassicalPair, a: float) -> float:
    """Exact Pr{ per-symbol information density > a } at block length n.

    Computed by convolving the per-letter density distribution n times; word
    pairs with zero probability carry no mass and are ignored.
    """
    table = _ratio_table(pair)
    mask = pair.joint > 0.0
    vals, weights = convolve_atoms(table[mask], pair.joint[mask], pair.n)
    return float(weights[vals > pair.n * a].sum())


def in_typical_set(pair: ClassicalPair, a_word, b_word, bound: float, gamma: float) -> bool:
    """True iff the information density of the pair is <= bound + gamma."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    return information_density(pair, a_word, b_word) <= bound + gamma


def mutual_information(pair_or_joint) -> float:
    """Mutual information of a joint pmf in bits, with 0 log 0 = 0."""
    if isinstance(pair_or_joint, ClassicalPair):
        joint = pair_or_joint.joint
    else:
        joint = np.asarray(pair_or_joint, dtype=float)
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    mask = joint > 0.0
    outer = pa[:, None] * pb[None, :]
    return float(np.sum(joint[mask] * np.log2(joint[mask] / outer[mask])))


def von_neumann_entropy(state) -> float:
    """Entropy of a density operator in bits, with 0 log 0 = 0."""
    mat = state.mat if isinstance(state, DensityOperator) else np.asarray(state, complex)
    eigs = np.linalg.eigvalsh(mat)
    eigs = eigs[eigs > 0.0]
    return float(-np.sum(eigs * np.log2(eigs)))


def holevo_information(ensemble) -> float:
    """Holevo quantity S(avg state) - avg S(state) of a cq ensemble, in bits.

    ``ensemble`` iterates over (probability, state) pairs whose probabilities
    sum to 1 within 1e-9.
    """
    probs, mats = [], []
    for p, state in ensemble:
        probs.append(float(p))
        mats.append(state.mat if isinstance(state, DensityOperator) else np.asarray(state, complex))
    probs = np.asarray(probs)
    if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError("ensemble probabilities must be a pmf")
    avg = sum(p * m for p, m in zip(probs, mats))
    return von_neumann_entropy(avg) - float(
        sum(p * von_neumann_entropy(m) for p, m in zip(probs, mats) if p > 0)
    )


@dataclass(frozen=True)
class SpectralEstimate:
    """A finite-n trace/tail curve over a grid of threshold rates.

    Values must be non-increasing in the threshold within 1e-9 and lie in
    [0, 1]. ``crossing(delta)`` reports the largest grid point with value
    >= 1 - delta.
    """

    a_grid: tuple
    values: tuple
    gamma: float
    n: int

    def __post_init__(self):
        grid = tuple(float(a) for a in self.a_grid)
        vals = tuple(float(v) for v in self.values)
        if len(grid) != len(vals) or not grid:
            raise ValidationError("SpectralEstimate: grid and values must align and be non-empty")
        if any(g2 <= g1 for g1, g2 in zip(grid, grid[1:])):
            raise ValidationError("SpectralEstimate: a_grid must be strictly increasing")
        if any(v < -MONOTONE_ATOL or v > 1 + MONOTONE_ATOL for v in vals):
            raise ValidationError("SpectralEstimate: values must lie in [0, 1]")
        if any(v2 > v1 + MONOTONE_ATOL for v1, v2 in zip(vals, vals[1:])):
            raise ValidationError("SpectralEstimate: values must be non-increasing in a")
        if self.gamma <= 0:
            raise ValidationError("SpectralEstimate: gamma must be positive")
        object.__setattr__(self, "a_grid", grid)
        object.__setattr__(self, "values", vals)

    def crossing(self, delta: float = 0.1):
        """Largest grid threshold with value >= 1 - delta, or None."""
        best = None
        for a, v in zip(self.a_grid, self.values):
            if v >= 1.0 - delta:
                best = a
        return best

    def rows(self):
        """(n, a, value) rows for CSV export."""
        return [(self.n, a, v) for a, v in zip(self.a_grid, self.values)]


def spectral_test_curve(rho_n: DensityOperator, sigma_n: DensityOperator, n: int,
                        a_grid, gamma: float) -> SpectralEstimate:
    """Trace of the threshold test Tr[{rho >= 2**(n(a-gamma)) sigma} rho] over a grid."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    values = []
    for a in a_grid:
        _, value = spectral_test(rho_n, sigma_n, 2.0 ** (n * (float(a) - gamma)))
        values.append(value)
    return SpectralEstimate(tuple(float(a) for a in a_grid), tuple(values), gamma, int(n))


def _cq_type_partitions(n: int, k: int):
    """All count vectors of length k summing to n."""
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _cq_type_partitions(n - first, k - 1):
            yield (first,) + rest


def _multinomial(n: int, counts) -> float:
    from math import comb

    out, rem = 1, n
    for c in counts:
        out *= comb(rem, c)
        rem -= c
    return float(out)


def cq_spectral_value(probs, states, n: int, a: float, gamma: float) -> float:
    """Trace test value for the n-fold joint cq state against its marginals.

    The tested pair is (sum_u p_u |u><u| x rho_u)**n versus
    (p**n diag x avg**n): the difference is block diagonal over aux words and
    invariant under letter permutations, so only one block per type (multiset
    of letters) is eigendecomposed.
    """
    probs = np.asarray(probs, float)
    mats = [s.mat if isinstance(s, DensityOperator) else np.asarray(s, complex) for s in states]
    if probs.ndim != 1 or len(mats) != probs.size:
        raise ValidationError("ensemble probabilities and states must align")
    if abs(probs.sum() - 1.0) > 1e-9 or (probs < 0).any():
        raise ValidationError("ensemble probabilities must be a pmf")
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    avg = sum(p * m for p, m in zip(probs, mats))
    sigma_n = tensor_power_mat(avg, n)
    c = 2.0 ** (n * (a - gamma))
    total = 0.0
    for counts in _cq_type_partitions(n, probs.size):
        p_word = float(np.prod([p ** k for p, k in zip(probs, counts)]))
        if p_word <= 0.0:
            continue
        weight = _multinomial(n, counts) * p_word
        block = np.array([[1.0 + 0j]])
        for u, k in enumerate(counts):
            for _ in range(k):
                block = np.kron(block, mats[u])
        rho_word = DensityOperator.trusted(block)
        sigma_word = DensityOperator.trusted(sigma_n)
        _, value = spectral_test(rho_word, sigma_word, c)
        total += weight * value
    return min(max(total, 0.0), 1.0)


def cq_spectral_crossing(probs, states, n: int, gamma: float, delta: float = 0.1,
                         lo: float = 0.0, hi: float | None = None, tol: float = 0.01):
    """Largest threshold a with cq trace value >= 1 - delta, by bisection.

    Bisection is justified by the monotonicity of the trace value in the
    threshold. Returns None when even ``lo`` fails the 1 - delta level.
    """
    if hi is None:
        dim = states[0].mat.shape[0] if isinstance(states[0], DensityOperator) else np.asarray(states[0]).shape[0]
        hi = np.log2(dim) + gamma + 1.0
    target = 1.0 - delta
    if cq_spectral_value(probs, states, n, lo, gamma) < target:
        return None
    if cq_spectral_value(probs, states, n, hi, gamma) >= target:
        return float(hi)
    lo, hi = float(lo), float(hi)
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if cq_spectral_value(probs, states, n, mid, gamma) >= target:
            lo = mid
        else:
            hi = mid
    return lo
