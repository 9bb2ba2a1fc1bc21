"""Independent oracles and checks for the coding engine.

Classical rate-region evaluators (coded and full side information at the
encoder), Shannon capacity via alternating maximization, a numerical suite
for the operator inequality used to split decoding error, a finite-n lower
bound on the error probability of any code, a quantizer-cardinality tail
check, and exact exhaustive error computation for fixed small codes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .infospec import convolve_atoms, mutual_information
from .model import ProductExtension, validate_word
from .protocol import Codebook, ProtocolParams, SimCaches, detection_threshold
from .qop import (
    DensityOperator,
    HermitianOperator,
    Povm,
    inv_sqrt_on_support,
    positive_eigenspace_projector,
    spectral_norm,
)


@dataclass(frozen=True)
class ClassicalChannel:
    """Discrete memoryless channel with state: p(y | x, s) and a state pmf."""

    p_out: np.ndarray  # shape (inputs, states, outputs)
    p_state: np.ndarray

    def __post_init__(self):
        p_out = np.asarray(self.p_out, dtype=float)
        p_state = np.asarray(self.p_state, dtype=float)
        if p_out.ndim != 3:
            raise ValidationError("p_out must have shape (inputs, states, outputs)")
        if (p_out < 0).any():
            raise ValidationError("p_out has negative entries")
        dev = np.abs(p_out.sum(axis=2) - 1.0)
        if dev.max() > 1e-12:
            idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
            raise ValidationError(f"p_out row {idx} does not sum to 1")
        if p_state.ndim != 1 or p_state.shape[0] != p_out.shape[1]:
            raise ValidationError("p_state must have one entry per state letter")
        if (p_state < 0).any() or abs(p_state.sum() - 1.0) > 1e-12:
            raise ValidationError("p_state must be a pmf")
        p_out = p_out.copy(); p_out.setflags(write=False)
        p_state = p_state.copy(); p_state.setflags(write=False)
        object.__setattr__(self, "p_out", p_out)
        object.__setattr__(self, "p_state", p_state)

    @property
    def n_inputs(self) -> int:
        return self.p_out.shape[0]

    @property
    def n_states(self) -> int:
        return self.p_out.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.p_out.shape[2]


def heegard_elgamal_rates(channel: ClassicalChannel, law) -> tuple:
    """Achievable-rate evaluator for coded side information at the encoder.

    Returns (I[aux; out] - I[aux; quant], I[state; quant]) computed exactly
    from the induced joint pmf of the factorized law attached to the channel.
    """
    if law.n_state != channel.n_states:
        raise ValidationError(
            f"law has {law.n_state} state letters, channel has {channel.n_states}"
        )
    if law.n_input != channel.n_inputs:
        raise ValidationError(
            f"law has {law.n_input} input letters, channel has {channel.n_inputs}"
        )
    # joint over (s, q, u, x, y)
    joint = np.einsum(
        "s,sq,qu,uqx,xsy->squxy",
        law.p_state, law.p_quant_given_state, law.p_aux_given_quant,
        law.p_input_given_aux_quant, channel.p_out,
    )
    i_uy = mutual_information(joint.sum(axis=(0, 1, 3)))
    i_uq = mutual_information(joint.sum(axis=(0, 3, 4)))
    i_sq = mutual_information(joint.sum(axis=(2, 3, 4)))
    return i_uy - i_uq, i_sq


def _simplex_grid(k: int, resolution: int) -> np.ndarray:
    """All pmfs over k letters with entries that are multiples of 1/resolution."""
    grids = []
    for comp in itertools.combinations_with_replacement(range(k), resolution):
        counts = np.bincount(comp, minlength=k)
        grids.append(counts / resolution)
    return np.array(grids)


@dataclass(frozen=True)
class GpCapacityResult:
    value: float
    p_aux_given_state: np.ndarray  # shape (states, u_size), one pmf row per state
    assignment: np.ndarray         # shape (u_size, states) -> input letter


def gp_capacity(channel: ClassicalChannel, u_size: int, grid_resolution: int = 20,
                max_evals: int = 50_000_000) -> GpCapacityResult:
    """Exhaustive-grid value of the full-side-information coding bound.

    Maximizes I[aux; out] - I[aux; state] over gridded conditionals
    p(aux | state) and all deterministic input assignments aux x state ->
    input. ``u_size`` must respect the cardinality cap
    min(inputs * states, outputs + states - 1).
    """
    cap = min(channel.n_inputs * channel.n_states, channel.n_outputs + channel.n_states - 1)
    if not 1 <= u_size <= cap:
        raise ValidationError(f"u_size must lie in [1, {cap}] for this channel")
    if grid_resolution < 1:
        raise ValidationError("grid_resolution must be >= 1")
    ns = channel.n_states
    grid = _simplex_grid(u_size, grid_resolution)
    n_combo = grid.shape[0] ** ns
    n_maps = channel.n_inputs ** (u_size * ns)
    if n_combo * n_maps > max_evals:
        raise ValidationError(
            f"grid search size {n_combo} x {n_maps} exceeds cap {max_evals}; "
            "reduce u_size or grid_resolution"
        )

    # all conditionals p(u|s): array (n_combo, ns, u_size)
    combos = np.stack(
        [np.stack(c, axis=0) for c in itertools.product(grid, repeat=ns)], axis=0
    )
    joint_us = channel.p_state[None, :, None] * combos          # (c, s, u)
    p_u = joint_us.sum(axis=1)                                  # (c, u)
    mask = joint_us > 0
    denom = p_u[:, None, :] * channel.p_state[None, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = joint_us * np.log2(joint_us / denom)
    terms[~mask] = 0.0
    i_us = terms.sum(axis=(1, 2))                               # (c,)

    best_val = -np.inf
    best_combo = None
    best_map = None
    for assignment in itertools.product(range(channel.n_inputs), repeat=u_size * ns):
        amap = np.asarray(assignment, dtype=int).reshape(u_size, ns)
        w = channel.p_out[amap, np.arange(ns)[None, :], :]      # (u, s, y)
        joint_uy = np.einsum("csu,usy->cuy", joint_us, w)
        p_y = joint_uy.sum(axis=1)
        denom_uy = p_u[:, :, None] * p_y[:, None, :]
        mask_uy = joint_uy > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = joint_uy * np.log2(joint_uy / denom_uy)
        t[~mask_uy] = 0.0
        i_uy = t.sum(axis=(1, 2))
        objective = i_uy - i_us
        c = int(np.argmax(objective))
        if objective[c] > best_val:
            best_val = float(objective[c])
            best_combo = combos[c]
            best_map = amap
    return GpCapacityResult(best_val, best_combo, best_map)


@dataclass(frozen=True)
class BlahutArimotoResult:
    capacity: float
    input_pmf: np.ndarray
    iterations: int


def blahut_arimoto(p_out_given_input, tol: float = 1e-9,
                   max_iter: int = 20_000) -> BlahutArimotoResult:
    """Channel capacity in bits by alternating maximization.

    Stops when the gap between the upper bound max_x D(W_x || q) and the
    current lower bound drops below ``tol``; raises on non-convergence.
    """
    w = np.asarray(p_out_given_input, dtype=float)
    if w.ndim != 2 or (w < 0).any() or np.abs(w.sum(axis=1) - 1.0).max() > 1e-12:
        raise ValidationError("p_out_given_input must be a stochastic matrix")
    nx = w.shape[0]
    r = np.full(nx, 1.0 / nx)
    logw = np.where(w > 0, np.log2(np.where(w > 0, w, 1.0)), 0.0)
    for iteration in range(1, max_iter + 1):
        q = r @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(w > 0, w * (logw - np.log2(np.where(q > 0, q, 1.0))), 0.0).sum(axis=1)
        lower = float(r @ d)
        upper = float(d.max())
        if upper - lower <= tol:
            return BlahutArimotoResult(lower, r, iteration)
        r = r * np.exp2(d - d.max())
        r /= r.sum()
    raise ValidationError(f"Blahut-Arimoto did not converge within {max_iter} iterations")


def hayashi_nagaoka_check(s_op: HermitianOperator, t_op: HermitianOperator) -> float:
    """Minimum eigenvalue of the operator-inequality gap, which should be >= -1e-9.

    The inequality bounds I - (S+T)^(-1/2) S (S+T)^(-1/2) by 2(I-S) + 4T for
    0 <= S <= I and T >= 0; the pseudo-inverse acts on the support of S + T.
    """
    s, t = s_op.mat, t_op.mat
    if s.shape != t.shape:
        raise ValidationError("operators must share dimensions")
    tol = 1e-9 * max(spectral_norm(s), 1.0)
    eig_s = np.linalg.eigvalsh(s)
    if eig_s[0] < -tol or eig_s[-1] > 1.0 + tol:
        raise ValidationError("first operator must satisfy 0 <= S <= I")
    if np.linalg.eigvalsh(t)[0] < -1e-9 * max(spectral_norm(t), 1.0):
        raise ValidationError("second operator must be positive semidefinite")
    dim = s.shape[0]
    root = inv_sqrt_on_support(HermitianOperator((s + t + (s + t).conj().T) / 2.0)).mat
    sandwich = root @ s @ root
    gap = 2.0 * (np.eye(dim) - s) + 4.0 * t - (np.eye(dim) - sandwich)
    gap = (gap + gap.conj().T) / 2.0
    return float(np.linalg.eigvalsh(gap)[0])


def _random_unit_interval_operator(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (g + g.conj().T) / 2.0
    w, v = np.linalg.eigh(h)
    lo, hi = w[0], w[-1]
    span = hi - lo if hi > lo else 1.0
    w01 = (w - lo) / span
    return (v * w01) @ v.conj().T


def hayashi_nagaoka_suite(count: int, min_dim: int = 2, max_dim: int = 8,
                          seed: int = 0) -> dict:
    """Random-instance suite for the operator inequality; reports the worst gap."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    passes = 0
    for _ in range(count):
        dim = int(rng.integers(min_dim, max_dim + 1))
        s = _random_unit_interval_operator(rng, dim)
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        t = (g @ g.conj().T) * float(rng.uniform(0.0, 2.0))
        min_eig = hayashi_nagaoka_check(HermitianOperator(s), HermitianOperator(t))
        worst = min(worst, min_eig)
        passes += min_eig >= -1e-9
    return {"count": count, "passes": passes, "worst_min_eig": worst, "tolerance": -1e-9}


# ---------------------------------------------------------------------------
# Converse-side evaluators


def _le_test_projector(diff: HermitianOperator) -> np.ndarray:
    """Projector testing A <= B realized as I minus the strictly-positive projector.

    Zero eigenvalues of the difference count toward the <= side, keeping the
    two threshold tests complementary.
    """
    pos = positive_eigenspace_projector(diff).mat
    return np.eye(diff.dim) - pos


def converse_bound(ensemble, messages: int, n: int, gamma: float,
                   clamp: bool = True, max_words: int = 1 << 20) -> float:
    """Finite-n lower bound on the average error of any code at this size.

    ``ensemble`` lists per-letter (probability, state) pairs, extended iid to
    block length n; ``messages`` is the codebook size M. Evaluates

        sum_u p(u) Tr[rho_u {rho_u <= 2**(n(R - gamma)) avg}] - 2**(-n gamma)

    with R = log2(M)/n, exactly: by per-letter convolution when the ensemble
    commutes (diagonal states), otherwise by enumerating aux words.
    """
    if messages < 1:
        raise ValidationError("messages must be >= 1")
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    probs = np.array([float(p) for p, _ in ensemble])
    mats = [s.mat if isinstance(s, DensityOperator) else np.asarray(s, complex) for _, s in ensemble]
    if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError("ensemble probabilities must be a pmf")
    dim = mats[0].shape[0]
    rate = math.log2(messages) / n
    log_c = n * (rate - gamma)
    avg = sum(p * m for p, m in zip(probs, mats))

    off = ~np.eye(dim, dtype=bool)
    diagonal = all(np.all(np.abs(m[off]) == 0) for m in mats)
    if diagonal:
        # Classical path: the test value is an exact tail of the per-letter
        # log-likelihood ratio under the joint (u, y) distribution.
        avg_d = np.real(np.diag(avg))
        values, weights = [], []
        for p, m in zip(probs, mats):
            if p <= 0:
                continue
            d = np.real(np.diag(m))
            for y in range(dim):
                if d[y] <= 0:
                    continue
                values.append(math.log2(d[y]) - math.log2(avg_d[y]))
                weights.append(p * d[y])
        vals, wts = convolve_atoms(values, weights, n)
        tail = float(wts[vals <= log_c + 1e-12].sum())
    else:
        n_words = len(mats) ** n
        if n_words * dim ** n > max_words:
            raise ValidationError(
                f"dense converse evaluation needs {n_words} words at dim {dim ** n}; "
                "exceeds the desk-scale cap"
            )
        c = 2.0 ** log_c
        avg_n = np.array([[1.0 + 0j]])
        for _ in range(n):
            avg_n = np.kron(avg_n, avg)
        tail = 0.0
        for word in itertools.product(range(len(mats)), repeat=n):
            p_word = float(np.prod(probs[list(word)]))
            if p_word <= 0:
                continue
            rho = np.array([[1.0 + 0j]])
            for u in word:
                rho = np.kron(rho, mats[u])
            proj = _le_test_projector(HermitianOperator(rho - c * avg_n))
            tail += p_word * float(np.einsum("ij,ji->", proj, rho).real)
    bound = tail - 2.0 ** (-n * gamma)
    return max(bound, 0.0) if clamp else bound


def rs_converse_check(pmf, gamma: float, n: int):
    """Tail check for a quantizer output pmf over at most M values.

    Verifies exactly that Pr{(1/n) log2(1/p) >= (1/n) log2 M + gamma} is at
    most 2**(-n gamma), where M is the support size. Returns
    (holds, tail, threshold).
    """
    p = np.asarray(pmf, dtype=float)
    if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError("pmf must be a probability vector")
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    m = int((p > 0).sum())
    cut = math.log2(m) + n * gamma
    mask = p > 0
    tail = float(p[mask][-np.log2(p[mask]) >= cut - 1e-12].sum())
    threshold = 2.0 ** (-n * gamma)
    return bool(tail <= threshold + 1e-12), tail, threshold


# ---------------------------------------------------------------------------
# Exact average error of a fixed code


def _clip_ratio(log_ratio: float) -> float:
    if log_ratio >= 0.0:
        return 1.0
    return float(2.0 ** log_ratio)


def exact_error_fixed_code(ext: ProductExtension, params: ProtocolParams,
                           codebook: Codebook, decoder: Povm,
                           a: float | None = None,
                           max_branches: int = 2_000_000) -> float:
    """Exact average decoding error of a fixed codebook and decoder.

    Enumerates state words, marginalizes the encoder acceptance randomness
    analytically (selection of the quantization index and of the in-bin
    codeword are independent Bernoulli scans with fallback to index 0), and
    enumerates channel-input words, evaluating the decoder's per-bin success
    trace on each branch. Messages average uniformly.
    """
    if a is None:
        a = detection_threshold(ext)
    law = ext.law
    n = ext.n
    n_states = law.n_state ** n
    n_inputs = law.n_input ** n
    branches = n_states * codebook.bin_count * codebook.quant_count \
        * codebook.words_per_bin * n_inputs
    if branches > max_branches:
        raise ValidationError(
            f"exact enumeration needs {branches} branches, cap is {max_branches}"
        )
    caches = SimCaches(ext, a, params.gamma, params.eps)
    i_sq = mutual_information(law.joint_state_quant)
    i_uq = mutual_information(law.joint_aux_quant)

    # Per-bin success operators: sum of decoder elements within each bin.
    dim = decoder.dim
    bin_ops = np.zeros((codebook.bin_count, dim, dim), dtype=complex)
    for ell in range(codebook.total_words):
        bin_ops[codebook.bin_of(ell)] += decoder.elements[ell].mat

    gates = np.array([caches.gate(codebook.quant_words[k]) for k in range(codebook.quant_count)])

    # In-bin acceptance probabilities p[k, ell] for every quantization index.
    accept = np.zeros((codebook.quant_count, codebook.total_words))
    for k in range(codebook.quant_count):
        qw = codebook.quant_words[k]
        llr = ext.llr_aux_quant[codebook.aux_words, qw[None, :]].sum(axis=1)
        for ell in range(codebook.total_words):
            ratio = _clip_ratio(float(llr[ell]) - n * (i_uq + params.gamma))
            g = caches.detection_trace(codebook.aux_words[ell], qw)
            accept[k, ell] = ratio if g > 1.0 - caches.sqrt_eps else 0.0

    total_error = 0.0
    for flat in range(n_states):
        state_word = _unrank(flat, law.n_state, n)
        p_state = float(np.prod(law.p_state[state_word]))
        if p_state <= 0.0:
            continue
        llr_sq = ext.llr_state_quant[state_word[None, :], codebook.quant_words].sum(axis=1)
        q_acc = np.array([
            _clip_ratio(float(llr_sq[k]) - n * (i_sq + params.gamma)) if gates[k] else 0.0
            for k in range(codebook.quant_count)
        ])
        none_before = np.cumprod(np.concatenate(([1.0], 1.0 - q_acc)))
        sel_k = q_acc * none_before[:-1]
        sel_k[0] += none_before[-1]  # fallback merges with index 0

        for k in range(codebook.quant_count):
            if sel_k[k] <= 0.0:
                continue
            qw = codebook.quant_words[k]
            for m in range(codebook.bin_count):
                members = codebook.bin_slice(m)
                p_acc = accept[k, members.start:members.stop]
                none_b = np.cumprod(np.concatenate(([1.0], 1.0 - p_acc)))
                sel_ell = {members.start + j: float(p_acc[j] * none_b[j])
                           for j in range(codebook.words_per_bin)}
                sel_ell[0] = sel_ell.get(0, 0.0) + float(none_b[-1])  # global fallback
                for ell, w_ell in sel_ell.items():
                    if w_ell <= 0.0:
                        continue
                    aux_word = codebook.aux_words[ell]
                    err = _expected_error_over_inputs(
                        ext, aux_word, qw, state_word, bin_ops[m]
                    )
                    total_error += p_state * sel_k[k] * w_ell * err / codebook.bin_count
    return float(min(max(total_error, 0.0), 1.0))


def _unrank(flat: int, base: int, n: int) -> np.ndarray:
    word = np.empty(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        word[i] = flat % base
        flat //= base
    return word


def _expected_error_over_inputs(ext: ProductExtension, aux_word, quant_word,
                                state_word, bin_op: np.ndarray) -> float:
    law = ext.law
    n = ext.n
    pmfs = [law.p_input_given_aux_quant[aux_word[i], quant_word[i]] for i in range(n)]
    total = 0.0
    for input_word in itertools.product(*[range(law.n_input) for _ in range(n)]):
        p_x = 1.0
        for i, x in enumerate(input_word):
            p_x *= float(pmfs[i][x])
        if p_x <= 0.0:
            continue
        rho = ext.channel_output_mat(np.asarray(input_word, np.int64), state_word)
        success = float(np.einsum("ij,ji->", bin_op, rho).real)
        total += p_x * (1.0 - min(max(success, 0.0), 1.0))
    return total
