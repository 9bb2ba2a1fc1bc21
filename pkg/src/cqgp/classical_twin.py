"""Standalone classical reimplementation of the coding protocol.

For instances whose channel outputs are all diagonal, the protocol is
purely classical. This module re-derives every quantity with plain
probability-vector arithmetic, sharing nothing with the operator engine
except the input law and the diagonals of the channel matrices: detection
sets are entrywise likelihood-ratio indicators, the square-root measurement
reduces to entrywise normalization, and the reliability gates are evaluated
by direct enumeration of auxiliary words. It exists purely as an
independent cross-check of the quantum implementation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import CqGpChannel, JointLaw
from .protocol import Codebook, ProtocolParams, generate_codebooks, wilson_interval

MAX_TWIN_WORDS = 4096


class DiagonalInstance:
    """Classical view of a diagonal-output instance: W(y | x, s) tables."""

    def __init__(self, law: JointLaw, channel: CqGpChannel, n: int):
        d = channel.dim_output
        off = ~np.eye(d, dtype=bool)
        if np.abs(channel.state_mats[..., off]).max(initial=0.0) > 1e-12:
            raise ValidationError("classical twin requires diagonal channel outputs")
        if law.n_aux ** n > MAX_TWIN_WORDS or d ** n > MAX_TWIN_WORDS:
            raise ValidationError("classical twin caps enumeration at 4096 words")
        self.law = law
        self.n = int(n)
        self.dim = d
        idx = np.arange(d)
        self.w = channel.state_mats[:, :, idx, idx].real.copy()  # (x, s, y)
        # r(y | u, q) = sum_{s,x} p(s|q) p(x|u,q) W(y|x,s)
        self.r_out = np.einsum(
            "qs,uqx,xsy->uqy", law.p_state_given_quant, law.p_input_given_aux_quant, self.w
        )
        # t(y | u) = sum_q p(q|u) r(y|u,q), and the average output
        self.t_out = np.einsum("uq,uqy->uy", law.p_quant_given_aux, self.r_out)
        self.avg_out = np.einsum("u,uy->y", law.p_aux, self.t_out)
        self.aux_words = list(itertools.product(range(law.n_aux), repeat=self.n))

    def word_vec(self, table_rows) -> np.ndarray:
        out = np.array([1.0])
        for row in table_rows:
            out = np.kron(out, row)
        return out

    def detection_vec(self, aux_word, c: float) -> np.ndarray:
        """Indicator vector of output words where the codeword's likelihood wins."""
        num = self.word_vec([self.t_out[u] for u in aux_word])
        den = self.word_vec([self.avg_out] * self.n)
        diff = num - c * den
        tol = 1e-10 * float(np.abs(diff).max(initial=0.0))
        return (diff >= -tol).astype(float)

    def conditional_vec(self, aux_word, quant_word) -> np.ndarray:
        return self.word_vec([self.r_out[u, q] for u, q in zip(aux_word, quant_word)])

    def aux_word_cond_prob(self, aux_word, quant_word) -> float:
        p = 1.0
        for u, q in zip(aux_word, quant_word):
            p *= float(self.law.p_aux_given_quant[q, u])
        return p


@dataclass(frozen=True)
class TwinResult:
    trials: int
    error_count: int
    estimate: float
    ci_low: float
    ci_high: float
    quantizer_failures: int
    binning_failures: int

    def wilson(self, z: float = 1.96):
        return wilson_interval(self.error_count, self.trials, z)


def _clip01(log_ratio: float) -> float:
    return 1.0 if log_ratio >= 0.0 else 2.0 ** log_ratio


def _holevo_diagonal(probs, rows) -> float:
    avg = np.einsum("u,uy->y", probs, rows)

    def h(vec):
        pos = vec[vec > 0]
        return float(-(pos * np.log2(pos)).sum())

    return h(avg) - float(sum(p * h(r) for p, r in zip(probs, rows) if p > 0))


def _mi(joint) -> float:
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    mask = joint > 0
    return float(np.sum(joint[mask] * np.log2(joint[mask] / (np.outer(pa, pb)[mask]))))


def simulate_classical_twin(law: JointLaw, channel: CqGpChannel, params: ProtocolParams,
                            trials: int, master_seed: int,
                            codebook: Codebook | None = None,
                            codebook_batch: int = 1) -> TwinResult:
    """Monte Carlo error estimate of the protocol using only classical arithmetic.

    Mirrors the protocol semantics (acceptance tests with clipping, smallest
    accepted index, fallback to index 0, per-bin decoding, completion counts
    as error) on a diagonal instance. Uses its own likelihood-vector
    machinery throughout; random streams are derived per trial exactly as in
    the operator-based simulator but consumed by this independent code path.
    """
    inst = DiagonalInstance(law, channel, params.n)
    n = params.n
    i_sq = _mi(law.joint_state_quant)
    i_uq = _mi(law.joint_aux_quant)
    a = _holevo_diagonal(law.p_aux, inst.t_out)
    c_det = 2.0 ** (n * (a - params.gamma))
    sqrt_eps = math.sqrt(params.eps)
    quarter_eps = params.eps ** 0.25

    det_cache: dict = {}

    def detection(aux_word):
        if aux_word not in det_cache:
            det_cache[aux_word] = inst.detection_vec(aux_word, c_det)
        return det_cache[aux_word]

    gate_cache: dict = {}

    def gate(quant_word) -> bool:
        if quant_word in gate_cache:
            return gate_cache[quant_word]
        g1 = 0.0
        g2 = 0.0
        for word in inst.aux_words:
            p = inst.aux_word_cond_prob(word, quant_word)
            if p <= 0.0:
                continue
            dens = 0.0
            for u, q in zip(word, quant_word):
                joint = law.joint_aux_quant[u, q]
                dens += -np.inf if joint <= 0 else math.log2(joint) - math.log2(
                    law.p_aux[u]) - math.log2(law.p_quant[q])
            if dens > n * (i_uq + params.gamma):
                g1 += p
            value = float(np.dot(detection(word), inst.conditional_vec(word, quant_word)))
            if value <= 1.0 - sqrt_eps:
                g2 += p
        ok = bool(g1 < sqrt_eps and g2 < quarter_eps)
        gate_cache[quant_word] = ok
        return ok

    def sample_from(pmf, u: float) -> int:
        return min(int(np.searchsorted(np.cumsum(pmf), u, side="right")), len(pmf) - 1)

    errors = 0
    quant_failures = 0
    bin_failures = 0
    cb = codebook
    betas = None
    completion = None
    current_batch = -1

    def build_pgm(book: Codebook):
        lam = [detection(tuple(int(u) for u in book.aux_words[ell]))
               for ell in range(book.total_words)]
        m_vec = np.sum(lam, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(m_vec > 0, 1.0 / m_vec, 0.0)
        b = [l * inv for l in lam]
        comp = 1.0 - np.sum(b, axis=0)
        return b, np.clip(comp, 0.0, None)

    if cb is not None:
        betas, completion = build_pgm(cb)

    for trial in range(trials):
        if codebook is None:
            batch = trial // codebook_batch
            if batch != current_batch:
                cb = generate_codebooks(
                    law, params,
                    np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1, batch))),
                )
                betas, completion = build_pgm(cb)
                current_batch = batch
        rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, trial)))
        message = int(rng.integers(cb.bin_count))
        su = rng.random(n)
        state_word = tuple(sample_from(law.p_state, su[i]) for i in range(n))

        # quantizer scan
        z = rng.random(cb.quant_count)
        k_star = None
        for k in range(cb.quant_count):
            qw = tuple(int(q) for q in cb.quant_words[k])
            lr = 0.0
            for q, s in zip(qw, state_word):
                joint = law.joint_state_quant[s, q]
                lr += -np.inf if joint <= 0 else math.log2(joint) - math.log2(
                    law.p_state[s]) - math.log2(law.p_quant[q])
            accepted = z[k] <= _clip01(lr - n * (i_sq + params.gamma))
            if accepted and gate(qw) and k_star is None:
                k_star = k
        quant_failed = k_star is None
        quant_failures += quant_failed
        k_star = 0 if quant_failed else k_star
        qw = tuple(int(q) for q in cb.quant_words[k_star])

        # in-bin scan
        eta = rng.random(cb.words_per_bin)
        members = cb.bin_slice(message)
        ell_star = None
        for j, ell in enumerate(members):
            uw = tuple(int(u) for u in cb.aux_words[ell])
            lr = 0.0
            for u, q in zip(uw, qw):
                joint = law.joint_aux_quant[u, q]
                lr += -np.inf if joint <= 0 else math.log2(joint) - math.log2(
                    law.p_aux[u]) - math.log2(law.p_quant[q])
            if eta[j] > _clip01(lr - n * (i_uq + params.gamma)):
                continue
            value = float(np.dot(detection(uw), inst.conditional_vec(uw, qw)))
            if value > 1.0 - sqrt_eps and ell_star is None:
                ell_star = ell
        bin_failed = ell_star is None
        bin_failures += bin_failed
        ell_star = 0 if bin_failed else ell_star
        uw = tuple(int(u) for u in cb.aux_words[ell_star])

        xu = rng.random(n)
        input_word = tuple(
            sample_from(law.p_input_given_aux_quant[uw[i], qw[i]], xu[i]) for i in range(n)
        )
        out_vec = inst.word_vec([inst.w[x, s] for x, s in zip(input_word, state_word)])
        probs = np.array([float(np.dot(b, out_vec)) for b in betas]
                         + [float(np.dot(completion, out_vec))])
        probs = np.clip(probs, 0.0, None)
        total = probs.sum()
        if abs(total - 1.0) > 1e-8:
            raise ValidationError(f"twin outcome probabilities sum to {total!r}")
        outcome = int(rng.choice(len(probs), p=probs / total))
        decoded = None if outcome == cb.total_words else cb.bin_of(outcome)
        errors += decoded != message

    lo, hi = wilson_interval(errors, trials)
    return TwinResult(
        trials=trials, error_count=errors, estimate=errors / trials,
        ci_low=lo, ci_high=hi,
        quantizer_failures=quant_failures, binning_failures=bin_failures,
    )
