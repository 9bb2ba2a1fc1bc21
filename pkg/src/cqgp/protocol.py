"""Random-coding protocol with a rate-limited state quantizer.

The pipeline: draw a message codebook of auxiliary words partitioned into
message bins plus a quantization codebook; the state encoder picks a
quantization index by a thresholded acceptance test with two reliability
gates; the message encoder picks a codeword inside the message bin by a
matching acceptance test plus a detection-quality gate, then samples the
channel input letterwise; the decoder measures the square-root (pretty-good)
measurement built from per-codeword detection projectors and maps the
outcome to its bin.

Monte Carlo estimation regenerates the codebook every trial batch (default
every trial) to estimate the codebook-averaged error; a fixed-codebook mode
exists for comparison against exhaustive-enumeration oracles. Trials derive
independent random streams from (master seed, trial index) and may run
concurrently.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .infospec import holevo_information, mutual_information
from .model import ProductExtension, validate_word
from .qop import (
    DensityOperator,
    HermitianOperator,
    Povm,
    inv_sqrt_on_support,
    sample_measurement,
)

MAX_COUNT = 1 << 20
G2_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class SingleLetterRates:
    """Single-letter rate oracles of a law/channel pair (bits per use)."""

    aux_output: float   # Holevo information of the aux -> output ensemble
    aux_quant: float    # mutual information between aux and quantization letters
    state_quant: float  # mutual information between state and quantization letters


def single_letter_rates(ext: ProductExtension) -> SingleLetterRates:
    law = ext.law
    i_ub = holevo_information(zip(law.p_aux, ext.rho_given_aux))
    return SingleLetterRates(
        aux_output=i_ub,
        aux_quant=mutual_information(law.joint_aux_quant),
        state_quant=mutual_information(law.joint_state_quant),
    )


def detection_threshold(ext: ProductExtension) -> float:
    """Default detection-test threshold: the single-letter Holevo oracle."""
    return single_letter_rates(ext).aux_output


@dataclass(frozen=True)
class ProtocolParams:
    """Block length, slack, reliability parameter and the three code rates.

    ``eps`` must satisfy eps + sqrt(eps) + eps**0.25 < 1. Counts are the
    ceilings of 2**(n * rate), at least 1 and capped at 2**20.
    """

    n: int
    gamma: float
    eps: float
    rate_message: float
    rate_covering: float
    rate_quant: float

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValidationError("n must be >= 1")
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ValidationError("eps must lie in (0, 1)")
        if self.eps + math.sqrt(self.eps) + self.eps ** 0.25 >= 1.0:
            raise ValidationError(
                "eps + sqrt(eps) + eps**0.25 must be < 1 "
                f"(got {self.eps + math.sqrt(self.eps) + self.eps ** 0.25:.4f})"
            )
        for name, count in (
            ("bin_count", self.bin_count),
            ("words_per_bin", self.words_per_bin),
            ("quant_count", self.quant_count),
        ):
            if count > MAX_COUNT:
                raise ValidationError(f"{name} = {count} exceeds the desk-scale cap {MAX_COUNT}")

    def _count(self, rate: float) -> int:
        return max(1, math.ceil(2.0 ** (self.n * rate) - 1e-9))

    @property
    def bin_count(self) -> int:
        return self._count(self.rate_message)

    @property
    def words_per_bin(self) -> int:
        return self._count(self.rate_covering)

    @property
    def quant_count(self) -> int:
        return self._count(self.rate_quant)

    @property
    def total_words(self) -> int:
        return self.bin_count * self.words_per_bin


def default_params(ext: ProductExtension, n: int, gamma: float, eps: float,
                   rate_message: float | None = None,
                   rate_covering: float | None = None,
                   rate_quant: float | None = None) -> ProtocolParams:
    """Protocol parameters with rates set by the single-letter oracles.

    Defaults: message rate = I[aux; output] - I[aux; quant] - 6 gamma,
    covering rate = I[aux; quant] + 2 gamma, quantization rate =
    I[state; quant] + 2 gamma. Any rate can be overridden.
    """
    rates = single_letter_rates(ext)
    if rate_message is None:
        rate_message = rates.aux_output - rates.aux_quant - 6.0 * gamma
    if rate_covering is None:
        rate_covering = rates.aux_quant + 2.0 * gamma
    if rate_quant is None:
        rate_quant = rates.state_quant + 2.0 * gamma
    return ProtocolParams(
        n=int(n), gamma=float(gamma), eps=float(eps),
        rate_message=float(rate_message),
        rate_covering=float(rate_covering),
        rate_quant=float(rate_quant),
    )


@dataclass(frozen=True)
class Codebook:
    """Message codebook (aux words, binned) plus the quantization codebook."""

    aux_words: np.ndarray
    quant_words: np.ndarray
    bin_count: int
    words_per_bin: int

    def __post_init__(self):
        aux = np.asarray(self.aux_words, dtype=np.int64)
        quant = np.asarray(self.quant_words, dtype=np.int64)
        if aux.ndim != 2 or quant.ndim != 2:
            raise ValidationError("codebooks must be 2-d integer arrays")
        if aux.shape[0] != self.bin_count * self.words_per_bin:
            raise ValidationError(
                f"aux codebook has {aux.shape[0]} words, expected "
                f"{self.bin_count} bins x {self.words_per_bin}"
            )
        if quant.shape[1] != aux.shape[1]:
            raise ValidationError("aux and quantization words must share the block length")
        aux = aux.copy(); aux.setflags(write=False)
        quant = quant.copy(); quant.setflags(write=False)
        object.__setattr__(self, "aux_words", aux)
        object.__setattr__(self, "quant_words", quant)

    @property
    def n(self) -> int:
        return self.aux_words.shape[1]

    @property
    def total_words(self) -> int:
        return self.aux_words.shape[0]

    @property
    def quant_count(self) -> int:
        return self.quant_words.shape[0]

    def bin_of(self, ell: int) -> int:
        return int(ell) // self.words_per_bin

    def bin_slice(self, m: int) -> range:
        start = int(m) * self.words_per_bin
        return range(start, start + self.words_per_bin)


def _sample_letters(pmf: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(pmf)
    draws = rng.random(count)
    idx = np.searchsorted(cdf, draws, side="right")
    return np.clip(idx, 0, pmf.size - 1).astype(np.int64)


def generate_codebooks(law, params: ProtocolParams, rng: np.random.Generator) -> Codebook:
    """Draw both codebooks iid from the per-letter marginals; deterministic per seed."""
    total = params.total_words
    aux = _sample_letters(law.p_aux, total * params.n, rng).reshape(total, params.n)
    quant = _sample_letters(law.p_quant, params.quant_count * params.n, rng).reshape(
        params.quant_count, params.n
    )
    return Codebook(aux, quant, params.bin_count, params.words_per_bin)


# ---------------------------------------------------------------------------
# Reliability gates


def atypicality_mass(ext: ProductExtension, quant_word, gamma: float) -> float:
    """Conditional mass of aux words jointly atypical with a quantization word.

    Exact Pr{ per-symbol aux/quant information density > I[aux;quant] + gamma }
    under p(aux word | quant word), computed by convolving the per-letter
    density distribution (no enumeration of aux words).
    """
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    qw = validate_word(quant_word, ext.n, ext.law.n_quant, "quant word")
    bound = mutual_information(ext.law.joint_aux_quant) + gamma
    dist = {0.0: 1.0}
    for q in qw:
        weights = ext.law.p_aux_given_quant[q]
        vals = ext.llr_aux_quant[:, q]
        nxt: dict = {}
        for u, w in enumerate(weights):
            if w <= 0.0:
                continue
            v = vals[u]
            for sv, sw in dist.items():
                key = round(sv + v, 10) if np.isfinite(v) else -np.inf
                nxt[key] = nxt.get(key, 0.0) + sw * w
        dist = nxt
    threshold = ext.n * bound
    return float(sum(w for v, w in dist.items() if v > threshold))


def _descending_product_words(per_letter_probs):
    """Yield (word, prob) of a product pmf in non-increasing probability order."""
    orders = [np.argsort(-p, kind="stable") for p in per_letter_probs]
    sorted_p = []
    for p, order in zip(per_letter_probs, orders):
        sp = p[order]
        keep = int((sp > 0.0).sum())
        if keep == 0:
            return
        sorted_p.append(sp[:keep])
    n = len(per_letter_probs)
    start = (0,) * n

    def prob_of(pos):
        out = 1.0
        for i, j in enumerate(pos):
            out *= sorted_p[i][j]
        return out

    heap = [(-prob_of(start), start)]
    seen = {start}
    while heap:
        negp, pos = heapq.heappop(heap)
        word = tuple(int(orders[i][j]) for i, j in enumerate(pos))
        yield word, -negp
        for i in range(n):
            if pos[i] + 1 < sorted_p[i].size:
                nxt = pos[:i] + (pos[i] + 1,) + pos[i + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (-prob_of(nxt), nxt))


def _detection_trace(ext: ProductExtension, aux_word, quant_word, a: float, gamma: float) -> float:
    """Tr[ detection projector x conditional output ] for one (aux, quant) pair."""
    if ext.diagonal:
        lam = ext.detection_projector_diag(aux_word, a, gamma)
        rho = ext.conditional_output_diag(aux_word, quant_word)
        return float(np.dot(lam, rho).real)
    lam = ext.detection_projector_mat(aux_word, a, gamma)
    rho = ext.conditional_output_mat(aux_word, quant_word)
    return float(np.sum(lam * rho.T).real)


def weak_detection_mass_interval(ext: ProductExtension, quant_word, a: float, gamma: float,
                                 eps: float, residual_tol: float = G2_RESIDUAL_TOL):
    """Bounds on the conditional mass of aux words with weak detection value.

    Sums p(aux word | quant word) over words whose detection trace is at most
    1 - sqrt(eps), enumerating words in decreasing conditional probability
    until the uncovered residual falls below ``residual_tol``. Returns
    (lower, upper) with upper = lower + residual.
    """
    qw = validate_word(quant_word, ext.n, ext.law.n_quant, "quant word")
    threshold = 1.0 - math.sqrt(eps)
    per_letter = [ext.law.p_aux_given_quant[q] for q in qw]
    weak = 0.0
    covered = 0.0
    for word, p in _descending_product_words(per_letter):
        if _detection_trace(ext, word, qw, a, gamma) <= threshold:
            weak += p
        covered += p
        if 1.0 - covered < residual_tol:
            break
    residual = max(1.0 - covered, 0.0)
    return weak, min(weak + residual, 1.0)


def weak_detection_mass(ext: ProductExtension, quant_word, a: float, gamma: float,
                        eps: float, residual_tol: float = G2_RESIDUAL_TOL) -> float:
    """Upper endpoint of ``weak_detection_mass_interval`` (conservative for gating)."""
    return weak_detection_mass_interval(ext, quant_word, a, gamma, eps, residual_tol)[1]


class SimCaches:
    """Memoized reliability gates and detection traces for one parameter set.

    Gate and trace values depend only on the instance and (a, gamma, eps),
    never on the codebook, so they stay valid across regenerated codebooks.
    """

    def __init__(self, ext: ProductExtension, a: float, gamma: float, eps: float):
        self.ext = ext
        self.a = float(a)
        self.gamma = float(gamma)
        self.eps = float(eps)
        self.sqrt_eps = math.sqrt(eps)
        self.quarter_eps = eps ** 0.25
        self._gate: dict = {}
        self._trace: dict = {}

    def gate(self, quant_word) -> bool:
        key = tuple(int(q) for q in quant_word)
        hit = self._gate.get(key)
        if hit is None:
            g1 = atypicality_mass(self.ext, key, self.gamma)
            g2 = weak_detection_mass(self.ext, key, self.a, self.gamma, self.eps)
            hit = bool(g1 < self.sqrt_eps and g2 < self.quarter_eps)
            self._gate[key] = hit
        return hit

    def detection_trace(self, aux_word, quant_word) -> float:
        key = (tuple(int(u) for u in aux_word), tuple(int(q) for q in quant_word))
        hit = self._trace.get(key)
        if hit is None:
            hit = _detection_trace(self.ext, key[0], key[1], self.a, self.gamma)
            self._trace[key] = hit
        return hit


@dataclass(frozen=True)
class QuantizerOutcome:
    """Chosen quantization index plus the per-index acceptance trace."""

    index: int
    failed: bool
    zeta: np.ndarray
    indicators: np.ndarray


def quantizer_encode(ext: ProductExtension, codebook: Codebook, params: ProtocolParams,
                     state_word, rng: np.random.Generator, a: float | None = None,
                     caches: SimCaches | None = None) -> QuantizerOutcome:
    """State-encoder side: pick the smallest accepted quantization index.

    For each index k, an acceptance variable Z(k) uniform on [0, 1] is
    compared against the likelihood ratio of (quant word, state word) scaled
    by 2**(-n (I[state;quant] + gamma)) and clipped at 1; the index also has
    to pass both reliability gates. Falls back to index 0 when nothing is
    accepted.
    """
    state_word = validate_word(state_word, ext.n, ext.law.n_state, "state word")
    if a is None:
        a = detection_threshold(ext)
    if caches is None:
        caches = SimCaches(ext, a, params.gamma, params.eps)
    i_sq = mutual_information(ext.law.joint_state_quant)
    llr = ext.llr_state_quant[state_word[None, :], codebook.quant_words].sum(axis=1)
    log_ratio = llr - params.n * (i_sq + params.gamma)
    with np.errstate(over="ignore"):
        ratio = np.where(log_ratio >= 0.0, 1.0, np.exp2(np.minimum(log_ratio, 0.0)))
    z = rng.random(codebook.quant_count)
    zeta = z <= ratio
    gates = np.fromiter(
        (caches.gate(codebook.quant_words[k]) for k in range(codebook.quant_count)),
        dtype=bool, count=codebook.quant_count,
    )
    indicators = zeta & gates
    hits = np.nonzero(indicators)[0]
    if hits.size:
        return QuantizerOutcome(int(hits[0]), False, zeta, indicators)
    return QuantizerOutcome(0, True, zeta, indicators)


@dataclass(frozen=True)
class MessageOutcome:
    """Chosen codeword index (global), channel input word, acceptance trace."""

    index: int
    failed: bool
    input_word: np.ndarray
    accepted: np.ndarray


def message_encode(ext: ProductExtension, codebook: Codebook, params: ProtocolParams,
                   message: int, quant_index: int, rng: np.random.Generator,
                   a: float | None = None, caches: SimCaches | None = None) -> MessageOutcome:
    """Message-encoder side: pick a codeword in the message bin, then the input.

    A codeword is accepted when a uniform draw passes the clipped
    (aux, quant) likelihood-ratio test and its detection trace against the
    chosen quantization word exceeds 1 - sqrt(eps). The smallest accepted
    in-bin index wins; with none, the global first codeword is used. The
    channel input is sampled letterwise from p(input | aux, quant).
    """
    if not 0 <= int(message) < codebook.bin_count:
        raise ValidationError(f"message {message} outside [0, {codebook.bin_count})")
    if not 0 <= int(quant_index) < codebook.quant_count:
        raise ValidationError(f"quantization index {quant_index} outside range")
    if a is None:
        a = detection_threshold(ext)
    if caches is None:
        caches = SimCaches(ext, a, params.gamma, params.eps)
    quant_word = codebook.quant_words[int(quant_index)]
    i_uq = mutual_information(ext.law.joint_aux_quant)
    members = codebook.bin_slice(int(message))
    words = codebook.aux_words[members.start:members.stop]
    llr = ext.llr_aux_quant[words, quant_word[None, :]].sum(axis=1)
    log_ratio = llr - params.n * (i_uq + params.gamma)
    with np.errstate(over="ignore"):
        ratio = np.where(log_ratio >= 0.0, 1.0, np.exp2(np.minimum(log_ratio, 0.0)))
    eta = rng.random(codebook.words_per_bin)
    passed = eta <= ratio
    accepted = np.zeros(codebook.words_per_bin, dtype=bool)
    chosen = None
    for j in range(codebook.words_per_bin):
        if not passed[j]:
            continue
        g = caches.detection_trace(words[j], quant_word)
        if g > 1.0 - caches.sqrt_eps:
            accepted[j] = True
            if chosen is None:
                chosen = members.start + j
    failed = chosen is None
    index = 0 if failed else chosen
    aux_word = codebook.aux_words[index]
    input_word = np.empty(params.n, dtype=np.int64)
    draws = rng.random(params.n)
    for i in range(params.n):
        pmf = ext.law.p_input_given_aux_quant[aux_word[i], quant_word[i]]
        input_word[i] = min(int(np.searchsorted(np.cumsum(pmf), draws[i], side="right")),
                            pmf.size - 1)
    return MessageOutcome(int(index), failed, input_word, accepted)


# ---------------------------------------------------------------------------
# Decoder


def build_decoder(ext: ProductExtension, codebook: Codebook, gamma: float,
                  a: float | None = None) -> Povm:
    """Square-root measurement over all codewords plus a failure completion.

    Each element is M^(-1/2) L M^(-1/2) where L is the codeword's detection
    projector and M sums the projectors over every codeword (duplicates
    counted); the inverse square root acts on the support, and the completion
    I - sum(elements) absorbs the co-support as decoding failure.
    """
    if a is None:
        a = detection_threshold(ext)
    unique, inverse, counts = np.unique(
        codebook.aux_words, axis=0, return_inverse=True, return_counts=True
    )
    if ext.diagonal:
        dim = ext.dim_block
        lams = [ext.detection_projector_diag(unique[i], a, gamma) for i in range(len(unique))]
        m_diag = np.zeros(dim)
        for lam, cnt in zip(lams, counts):
            m_diag += cnt * lam
        inv_sqrt = np.where(m_diag > 1e-10 * max(m_diag.max(initial=0.0), 1.0),
                            1.0 / np.sqrt(np.maximum(m_diag, 1e-300)), 0.0)
        betas = [HermitianOperator(np.diag((inv_sqrt * lam * inv_sqrt).astype(complex)))
                 for lam in lams]
        total = np.zeros(dim)
        for lam, cnt in zip(lams, counts):
            total += cnt * (inv_sqrt * lam * inv_sqrt)
        completion = HermitianOperator(np.diag((1.0 - total).astype(complex)))
    else:
        lams = [ext.detection_projector_mat(unique[i], a, gamma) for i in range(len(unique))]
        m_sum = np.zeros((ext.dim_block, ext.dim_block), dtype=complex)
        for lam, cnt in zip(lams, counts):
            m_sum += cnt * lam
        norm = inv_sqrt_on_support(HermitianOperator(m_sum)).mat
        betas = []
        total = np.zeros_like(m_sum)
        for lam in lams:
            b = norm @ lam @ norm
            b = (b + b.conj().T) / 2.0
            betas.append(HermitianOperator(b))
        for b, cnt in zip(betas, counts):
            total += cnt * b.mat
        completion = HermitianOperator(np.eye(ext.dim_block) - total)
    elements = [betas[inverse[ell]] for ell in range(codebook.total_words)]
    return Povm(elements, completion)


def decode_message(outcome: int, codebook: Codebook):
    """Map a measurement outcome to its message bin; the failure index maps to None."""
    if outcome == codebook.total_words:
        return None
    if not 0 <= outcome < codebook.total_words:
        raise ValidationError(f"outcome {outcome} outside [0, {codebook.total_words}]")
    return codebook.bin_of(outcome)


# ---------------------------------------------------------------------------
# Monte Carlo estimation


@dataclass(frozen=True)
class TransmissionTrace:
    trial: int
    message: int
    state_word: tuple
    quant_index: int
    codeword_index: int
    input_word: tuple
    outcome: int
    decoded: int | None
    quantizer_failed: bool
    binning_failed: bool
    error: bool


def wilson_interval(successes: int, trials: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class SimulationResult:
    """Monte Carlo error estimate with a 95% Wilson interval and event counts."""

    trials: int
    error_count: int
    estimate: float
    ci_low: float
    ci_high: float
    quantizer_failures: int
    binning_failures: int
    binning_failures_quant_ok: int
    decode_failures: int
    master_seed: int
    params: ProtocolParams
    traces: tuple = field(default_factory=tuple, repr=False)

    def wilson(self, z: float = 1.96):
        return wilson_interval(self.error_count, self.trials, z)

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "errors": self.error_count,
            "estimate": self.estimate,
            "ci95": [self.ci_low, self.ci_high],
            "quantizer_failures": self.quantizer_failures,
            "binning_failures": self.binning_failures,
            "binning_failures_quant_ok": self.binning_failures_quant_ok,
            "decode_failures": self.decode_failures,
            "master_seed": self.master_seed,
        }


def _trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, trial)))


def _codebook_rng(master_seed: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1, batch)))


def simulate(ext: ProductExtension, params: ProtocolParams, trials: int, master_seed: int,
             codebook: Codebook | None = None, codebook_batch: int = 1,
             a: float | None = None, keep_traces: bool = False) -> SimulationResult:
    """Estimate the average decoding error over uniform messages and iid states.

    With ``codebook=None`` a fresh codebook (and decoder) is drawn every
    ``codebook_batch`` trials, estimating the codebook-averaged error;
    passing a codebook fixes it for all trials. Fully deterministic given
    (instance, params, master_seed).
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if codebook_batch < 1:
        raise ValidationError("codebook_batch must be >= 1")
    if a is None:
        a = detection_threshold(ext)
    caches = SimCaches(ext, a, params.gamma, params.eps)
    fixed = codebook is not None
    current_batch = -1
    povm = None
    cb = codebook
    if fixed:
        povm = build_decoder(ext, cb, params.gamma, a=a)

    errors = 0
    quant_fail = 0
    bin_fail = 0
    bin_fail_quant_ok = 0
    decode_fail = 0
    traces = []
    for trial in range(trials):
        if not fixed:
            batch = trial // codebook_batch
            if batch != current_batch:
                cb = generate_codebooks(ext.law, params, _codebook_rng(master_seed, batch))
                povm = build_decoder(ext, cb, params.gamma, a=a)
                current_batch = batch
        rng = _trial_rng(master_seed, trial)
        message = int(rng.integers(cb.bin_count))
        state_word = _sample_letters(ext.law.p_state, ext.n, rng)
        quant = quantizer_encode(ext, cb, params, state_word, rng, a=a, caches=caches)
        msg = message_encode(ext, cb, params, message, quant.index, rng, a=a, caches=caches)
        rho = DensityOperator.trusted(ext.channel_output_mat(msg.input_word, state_word))
        outcome = sample_measurement(povm, rho, rng)
        decoded = decode_message(outcome, cb)
        err = decoded != message
        errors += err
        quant_fail += quant.failed
        bin_fail += msg.failed
        bin_fail_quant_ok += (msg.failed and not quant.failed)
        decode_fail += decoded is None
        if keep_traces:
            traces.append(TransmissionTrace(
                trial=trial, message=message,
                state_word=tuple(int(s) for s in state_word),
                quant_index=quant.index, codeword_index=msg.index,
                input_word=tuple(int(x) for x in msg.input_word),
                outcome=outcome, decoded=decoded,
                quantizer_failed=quant.failed, binning_failed=msg.failed,
                error=bool(err),
            ))
    lo, hi = wilson_interval(errors, trials)
    return SimulationResult(
        trials=trials, error_count=errors, estimate=errors / trials,
        ci_low=lo, ci_high=hi,
        quantizer_failures=quant_fail, binning_failures=bin_fail,
        binning_failures_quant_ok=bin_fail_quant_ok, decode_failures=decode_fail,
        master_seed=master_seed, params=params, traces=tuple(traces),
    )


def error_budget(params: ProtocolParams) -> float:
    """Closed-form bound on the codebook-averaged error for these parameters.

    6 eps + 3 sqrt(eps) + 3 eps**0.25
    + 2 sqrt(eps) / (1 - eps - sqrt(eps) - eps**0.25) + 3 exp(-2**(n gamma)).
    """
    eps = params.eps
    denom = 1.0 - eps - math.sqrt(eps) - eps ** 0.25
    if denom <= 0.0:
        raise ValidationError("eps + sqrt(eps) + eps**0.25 must be < 1")
    tail = 3.0 * math.exp(-(2.0 ** (params.n * params.gamma)))
    return 6.0 * eps + 3.0 * math.sqrt(eps) + 3.0 * eps ** 0.25 + 2.0 * math.sqrt(eps) / denom + tail
