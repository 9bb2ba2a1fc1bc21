"""Channel and source model for state-dependent classical-quantum coding.

A channel maps a classical (input, state) letter pair to a density operator.
The joint law factorizes as

    p(state) p(quant | state) p(aux | quant) p(input | aux, quant)

where ``quant`` is the quantized description of the state available to the
message encoder and ``aux`` is the auxiliary coding variable. The engine
extends both to memoryless n-letter products and derives the conditional and
averaged output states the coding protocol needs, together with the
per-codeword detection projectors.

Classical registers are never materialized as dense tensor factors for n > 1;
they are kept as indexed weights, which keeps every dense object at dimension
(output dim)**n.
"""

from __future__ import annotations

import json
import threading

import numpy as np

from .errors import ValidationError
from .qop import (
    DensityOperator,
    HermitianOperator,
    Projector,
    matrix_from_pairs,
    matrix_to_pairs,
    nonneg_eigenspace_projector,
    tensor_power_mat,
)

MAX_ENUMERATED_WORDS = 4096


def _check_pmf(vec: np.ndarray, what: str, atol: float = 1e-12) -> np.ndarray:
    arr = np.asarray(vec, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{what}: expected a non-empty probability vector")
    if (arr < 0).any():
        bad = int(np.argmin(arr))
        raise ValidationError(f"{what}: entry {bad} is negative ({arr[bad]!r})")
    s = float(arr.sum())
    if abs(s - 1.0) > atol:
        raise ValidationError(f"{what}: sums to {s!r}, not 1 within {atol:.0e}")
    return arr


def _check_stochastic(mat: np.ndarray, what: str, atol: float = 1e-12) -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    if arr.ndim < 2:
        raise ValidationError(f"{what}: expected a stochastic array, got shape {arr.shape}")
    if (arr < 0).any():
        idx = np.unravel_index(int(np.argmin(arr)), arr.shape)
        raise ValidationError(f"{what}: entry {idx} is negative ({arr[idx]!r})")
    sums = arr.sum(axis=-1)
    dev = np.abs(sums - 1.0)
    if dev.max() > atol:
        idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
        raise ValidationError(
            f"{what}: row {idx} sums to {sums[idx]!r}, not 1 within {atol:.0e}"
        )
    return arr


class CqGpChannel:
    """Finite-alphabet classical-quantum channel with a classical state.

    ``states[x][s]`` is the output density operator for input letter x under
    state letter s; every pair must be defined and valid.
    """

    def __init__(self, input_alphabet, state_alphabet, dim_output, states):
        self.input_alphabet = tuple(str(a) for a in input_alphabet)
        self.state_alphabet = tuple(str(a) for a in state_alphabet)
        if len(set(self.input_alphabet)) != len(self.input_alphabet):
            raise ValidationError("input alphabet contains duplicate symbols")
        if len(set(self.state_alphabet)) != len(self.state_alphabet):
            raise ValidationError("state alphabet contains duplicate symbols")
        self.dim_output = int(dim_output)
        if self.dim_output < 1:
            raise ValidationError("dim_output must be a positive integer")
        nx, ns, d = len(self.input_alphabet), len(self.state_alphabet), self.dim_output
        mats = np.zeros((nx, ns, d, d), dtype=complex)
        for x in range(nx):
            for s in range(ns):
                try:
                    row = states[x][s]
                except (IndexError, KeyError, TypeError) as exc:
                    raise ValidationError(
                        f"channel output missing for input {self.input_alphabet[x]!r}, "
                        f"state {self.state_alphabet[s]!r}"
                    ) from exc
                mat = row.mat if isinstance(row, DensityOperator) else np.asarray(row, complex)
                if mat.shape != (d, d):
                    raise ValidationError(
                        f"output state for ({self.input_alphabet[x]!r}, "
                        f"{self.state_alphabet[s]!r}) has shape {mat.shape}, expected ({d},{d})"
                    )
                try:
                    DensityOperator(mat)
                except ValidationError as exc:
                    raise ValidationError(
                        f"output state for ({self.input_alphabet[x]!r}, "
                        f"{self.state_alphabet[s]!r}) is invalid: {exc}"
                    ) from exc
                mats[x, s] = mat
        mats.setflags(write=False)
        self.state_mats = mats

    @property
    def n_inputs(self) -> int:
        return len(self.input_alphabet)

    @property
    def n_states(self) -> int:
        return len(self.state_alphabet)

    def output_state(self, x: int, s: int) -> DensityOperator:
        return DensityOperator.trusted(self.state_mats[x, s])

    def __repr__(self):
        return (
            f"CqGpChannel(|X|={self.n_inputs}, |S|={self.n_states}, dim={self.dim_output})"
        )


class JointLaw:
    """Factorized per-letter law p(s) p(q|s) p(u|q) p(x|u,q).

    Rows of every stochastic array must sum to 1 within 1e-12 with
    non-negative entries. Quantization letters with zero marginal probability
    are rejected here so that Bayes conditionals are always defined.
    """

    def __init__(self, p_state, p_quant_given_state, p_aux_given_quant, p_input_given_aux_quant):
        self.p_state = _check_pmf(p_state, "p_state")
        self.p_quant_given_state = _check_stochastic(p_quant_given_state, "p_quant_given_state")
        self.p_aux_given_quant = _check_stochastic(p_aux_given_quant, "p_aux_given_quant")
        self.p_input_given_aux_quant = _check_stochastic(
            p_input_given_aux_quant, "p_input_given_aux_quant"
        )
        ns = self.p_state.size
        if self.p_quant_given_state.shape[0] != ns:
            raise ValidationError(
                f"p_quant_given_state has {self.p_quant_given_state.shape[0]} rows, "
                f"expected {ns} (one per state letter)"
            )
        nq = self.p_quant_given_state.shape[1]
        if self.p_aux_given_quant.shape[0] != nq:
            raise ValidationError(
                f"p_aux_given_quant has {self.p_aux_given_quant.shape[0]} rows, expected {nq}"
            )
        nu = self.p_aux_given_quant.shape[1]
        if self.p_input_given_aux_quant.ndim != 3 or self.p_input_given_aux_quant.shape[:2] != (nu, nq):
            raise ValidationError(
                "p_input_given_aux_quant must have shape (n_aux, n_quant, n_inputs); got "
                f"{self.p_input_given_aux_quant.shape}"
            )

        self.joint_state_quant = self.p_state[:, None] * self.p_quant_given_state
        self.p_quant = self.joint_state_quant.sum(axis=0)
        zero = np.nonzero(self.p_quant <= 0.0)[0]
        if zero.size:
            raise ValidationError(
                f"quantization letter {int(zero[0])} has zero marginal probability; "
                "remove it from the law"
            )
        self.p_state_given_quant = (self.joint_state_quant / self.p_quant[None, :]).T
        self.joint_aux_quant = (self.p_quant[:, None] * self.p_aux_given_quant).T
        self.p_aux = self.joint_aux_quant.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            pq_given_aux = self.joint_aux_quant / self.p_aux[:, None]
        pq_given_aux[~np.isfinite(pq_given_aux)] = 0.0
        self.p_quant_given_aux = pq_given_aux
        for arr in (
            self.p_state, self.p_quant_given_state, self.p_aux_given_quant,
            self.p_input_given_aux_quant, self.joint_state_quant, self.p_quant,
            self.p_state_given_quant, self.joint_aux_quant, self.p_aux,
            self.p_quant_given_aux,
        ):
            arr.setflags(write=False)

    @property
    def n_state(self) -> int:
        return self.p_state.size

    @property
    def n_quant(self) -> int:
        return self.p_quant.size

    @property
    def n_aux(self) -> int:
        return self.p_aux.size

    @property
    def n_input(self) -> int:
        return self.p_input_given_aux_quant.shape[2]

    def __repr__(self):
        return (
            f"JointLaw(|S|={self.n_state}, |Q|={self.n_quant}, "
            f"|U|={self.n_aux}, |X|={self.n_input})"
        )


def _log2_ratio_table(joint: np.ndarray, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """log2(joint / (pa outer pb)) with -inf where the joint vanishes."""
    with np.errstate(divide="ignore", invalid="ignore"):
        table = np.log2(joint) - np.log2(pa)[:, None] - np.log2(pb)[None, :]
    table[np.asarray(joint) <= 0.0] = -np.inf
    return table


class ProductExtension:
    """Memoryless n-letter extension of a law and channel.

    Precomputes the per-letter conditional outputs and caches per-codeword
    detection projectors. The cache is a concurrent-read, synchronized-write
    memo table keyed by (threshold, slack, codeword).

    When every channel output matrix is exactly diagonal, projectors and
    conditional outputs are computed entrywise on diagonals (same operators,
    no dense eigendecomposition); pass ``allow_diagonal_fastpath=False`` to
    force the dense route.
    """

    def __init__(self, law: JointLaw, channel: CqGpChannel, n: int,
                 allow_diagonal_fastpath: bool = True):
        if int(n) < 1:
            raise ValidationError("block length n must be >= 1")
        if channel.n_inputs != law.n_input:
            raise ValidationError(
                f"channel has {channel.n_inputs} input letters, law expects {law.n_input}"
            )
        if channel.n_states != law.n_state:
            raise ValidationError(
                f"channel has {channel.n_states} state letters, law expects {law.n_state}"
            )
        self.law = law
        self.channel = channel
        self.n = int(n)
        d = channel.dim_output

        # rho_aux_quant[u, q] = sum_{s,x} p(s|q) p(x|u,q) rho_{x,s}
        pxs = np.einsum(
            "qs,uqx->uqxs", law.p_state_given_quant, law.p_input_given_aux_quant
        )
        self.rho_aux_quant = np.einsum("uqxs,xsij->uqij", pxs, channel.state_mats)
        # rho_given_aux[u] = sum_q p(q|u) rho_aux_quant[u, q]
        self.rho_given_aux = np.einsum(
            "uq,uqij->uij", law.p_quant_given_aux, self.rho_aux_quant
        )
        # single-letter average output
        self.avg_output = np.einsum("u,uij->ij", law.p_aux, self.rho_given_aux)
        self.rho_aux_quant.setflags(write=False)
        self.rho_given_aux.setflags(write=False)
        self.avg_output.setflags(write=False)

        self.llr_state_quant = _log2_ratio_table(
            law.joint_state_quant, law.p_state, law.p_quant
        )
        self.llr_aux_quant = _log2_ratio_table(law.joint_aux_quant, law.p_aux, law.p_quant)
        self.llr_state_quant.setflags(write=False)
        self.llr_aux_quant.setflags(write=False)

        off_mask = ~np.eye(d, dtype=bool)
        self.diagonal = bool(allow_diagonal_fastpath) and bool(
            np.all(channel.state_mats[..., off_mask] == 0)
        )
        if self.diagonal:
            idx = np.arange(d)
            self.rho_aux_quant_diag = self.rho_aux_quant[..., idx, idx].real.copy()
            self.rho_given_aux_diag = self.rho_given_aux[..., idx, idx].real.copy()
            self.avg_output_diag = self.avg_output[idx, idx].real.copy()
            self.rho_aux_quant_diag.setflags(write=False)
            self.rho_given_aux_diag.setflags(write=False)
            self.avg_output_diag.setflags(write=False)

        self._avg_output_power: np.ndarray | None = None
        self._avg_output_diag_power: np.ndarray | None = None
        self._proj_cache: dict = {}
        self._lock = threading.Lock()
        self.dim_block = d ** self.n

    def avg_output_power(self) -> np.ndarray:
        """The n-fold tensor power of the average single-letter output."""
        if self._avg_output_power is None:
            mat = tensor_power_mat(self.avg_output, self.n)
            mat.setflags(write=False)
            self._avg_output_power = mat
        return self._avg_output_power

    def avg_output_diag_power(self) -> np.ndarray:
        if self._avg_output_diag_power is None:
            vec = np.array([1.0])
            for _ in range(self.n):
                vec = np.kron(vec, self.avg_output_diag)
            vec.setflags(write=False)
            self._avg_output_diag_power = vec
        return self._avg_output_diag_power

    def aux_word_prob(self, aux_word) -> float:
        return float(np.prod(self.law.p_aux[np.asarray(aux_word, int)]))

    def conditional_output_mat(self, aux_word, quant_word) -> np.ndarray:
        """Raw matrix of the output state conditioned on (aux word, quant word)."""
        out = np.array([[1.0 + 0j]])
        for u, q in zip(aux_word, quant_word):
            out = np.kron(out, self.rho_aux_quant[u, q])
        return out

    def conditional_output_diag(self, aux_word, quant_word) -> np.ndarray:
        """Diagonal of the conditional output (diagonal instances only)."""
        out = np.array([1.0])
        for u, q in zip(aux_word, quant_word):
            out = np.kron(out, self.rho_aux_quant_diag[u, q])
        return out

    def output_given_aux_mat(self, aux_word) -> np.ndarray:
        out = np.array([[1.0 + 0j]])
        for u in aux_word:
            out = np.kron(out, self.rho_given_aux[u])
        return out

    def channel_output_mat(self, input_word, state_word) -> np.ndarray:
        out = np.array([[1.0 + 0j]])
        for x, s in zip(input_word, state_word):
            out = np.kron(out, self.channel.state_mats[x, s])
        return out

    def detection_projector_diag(self, aux_word, a: float, gamma: float) -> np.ndarray:
        """Diagonal (0/1 vector) of the detection projector; diagonal instances only."""
        word = tuple(int(u) for u in aux_word)
        key = (round(float(a), 12), round(float(gamma), 12), word)
        vec = self._proj_cache.get(key)
        if vec is not None:
            return vec
        if self.aux_word_prob(word) <= 0.0:
            raise ValidationError(f"aux word {word} has zero probability under the law")
        c = 2.0 ** (self.n * (a - gamma))
        diag = np.array([1.0])
        for u in word:
            diag = np.kron(diag, self.rho_given_aux_diag[u])
        diff = diag - c * self.avg_output_diag_power()
        tol = 1e-10 * float(np.abs(diff).max(initial=0.0))
        vec = (diff >= -tol).astype(float)
        vec.setflags(write=False)
        with self._lock:
            self._proj_cache[key] = vec
        return vec

    def detection_projector_mat(self, aux_word, a: float, gamma: float) -> np.ndarray:
        """Raw matrix of the detection projector for one codeword (cached)."""
        if self.diagonal:
            return np.diag(self.detection_projector_diag(aux_word, a, gamma).astype(complex))
        word = tuple(int(u) for u in aux_word)
        key = (round(float(a), 12), round(float(gamma), 12), word)
        proj = self._proj_cache.get(key)
        if proj is not None:
            return proj
        if self.aux_word_prob(word) <= 0.0:
            raise ValidationError(f"aux word {word} has zero probability under the law")
        c = 2.0 ** (self.n * (a - gamma))
        diff = self.output_given_aux_mat(word) - c * self.avg_output_power()
        proj = nonneg_eigenspace_projector(HermitianOperator(diff)).mat
        with self._lock:
            self._proj_cache[key] = proj
        return proj

    def clear_projector_cache(self):
        with self._lock:
            self._proj_cache.clear()

    def __repr__(self):
        return f"ProductExtension(n={self.n}, dim_block={self.dim_block})"


def conditional_output_state(ext: ProductExtension, aux_word, quant_word) -> DensityOperator:
    """Output state of the n-letter channel given an aux word and a quant word.

    Equals the per-letter tensor product of sum_{s,x} p(s|q) p(x|u,q) rho_{x,s};
    requires words of length n.
    """
    aux_word = validate_word(aux_word, ext.n, ext.law.n_aux, "aux word")
    quant_word = validate_word(quant_word, ext.n, ext.law.n_quant, "quant word")
    return DensityOperator(ext.conditional_output_mat(aux_word, quant_word))


def validate_word(word, n: int, alphabet_size: int, what: str):
    arr = np.asarray(word, dtype=int)
    if arr.ndim != 1 or arr.size != n:
        raise ValidationError(f"{what}: expected a length-{n} sequence")
    if arr.size and (arr.min() < 0 or arr.max() >= alphabet_size):
        raise ValidationError(f"{what}: letters must lie in [0, {alphabet_size})")
    return arr


class CqMarginals:
    """Aux/output marginals of the n-letter joint state.

    ``ensemble`` maps each aux word to (probability, conditional output state),
    ``aux_pmf`` is the induced pmf over aux words, and ``avg_output`` is the
    fully averaged output state.
    """

    def __init__(self, ensemble, aux_pmf, avg_output):
        self.ensemble = ensemble
        self.aux_pmf = aux_pmf
        self.avg_output = avg_output


def cq_marginals(ext: ProductExtension, max_words: int = MAX_ENUMERATED_WORDS) -> CqMarginals:
    """Enumerate the aux-word ensemble and average output of the n-fold state.

    Zero-probability aux words are omitted from the ensemble. Raises when the
    aux word count exceeds ``max_words``; the averaged output is still the
    cheap tensor power.
    """
    n_words = ext.law.n_aux ** ext.n
    if n_words > max_words:
        raise ValidationError(
            f"enumerating {n_words} aux words exceeds the cap of {max_words}"
        )
    ensemble = {}
    aux_pmf = {}
    for flat in range(n_words):
        word = _unrank_word(flat, ext.law.n_aux, ext.n)
        p = ext.aux_word_prob(word)
        aux_pmf[word] = p
        if p > 0.0:
            ensemble[word] = (p, DensityOperator.trusted(ext.output_given_aux_mat(word)))
    avg = DensityOperator.trusted(ext.avg_output_power())
    return CqMarginals(ensemble, aux_pmf, avg)


def _unrank_word(flat: int, base: int, n: int) -> tuple:
    word = []
    for _ in range(n):
        word.append(flat % base)
        flat //= base
    return tuple(reversed(word))


def detection_projector(ext: ProductExtension, aux_word, a: float, gamma: float) -> Projector:
    """Detection projector for one codeword.

    The joint test projector is block diagonal over the classical aux
    register, so the per-codeword operator is the non-negative eigenspace
    projector of (conditional output) - 2**(n(a - gamma)) (average output).
    Requires gamma > 0 and a codeword with positive probability.
    """
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    word = validate_word(aux_word, ext.n, ext.law.n_aux, "aux word")
    mat = ext.detection_projector_mat(word, a, gamma)
    return Projector(mat)


# ---------------------------------------------------------------------------
# JSON loading of a full system (channel plus law)

_SYSTEM_FIELDS = (
    "input_alphabet",
    "state_alphabet",
    "quant_alphabet",
    "aux_alphabet",
    "dim_output",
    "p_state",
    "p_quant_given_state",
    "p_aux_given_quant",
    "p_input_given_aux_quant",
    "output_states",
)


def system_from_dict(doc: dict):
    """Build (channel, law) from a parsed system document."""
    missing = [f for f in _SYSTEM_FIELDS if f not in doc]
    if missing:
        raise ValidationError(f"system document is missing fields: {', '.join(missing)}")
    nx = len(doc["input_alphabet"])
    ns = len(doc["state_alphabet"])
    raw = doc["output_states"]
    if not isinstance(raw, list) or len(raw) != nx:
        raise ValidationError(f"output_states must be a list with one row per input letter ({nx})")
    states = []
    for x in range(nx):
        if not isinstance(raw[x], list) or len(raw[x]) != ns:
            raise ValidationError(
                f"output_states[{x}] must list one matrix per state letter ({ns})"
            )
        states.append(
            [matrix_from_pairs(raw[x][s], f"output_states[{x}][{s}]") for s in range(ns)]
        )
    channel = CqGpChannel(
        doc["input_alphabet"], doc["state_alphabet"], doc["dim_output"], states
    )
    law = JointLaw(
        doc["p_state"],
        doc["p_quant_given_state"],
        doc["p_aux_given_quant"],
        doc["p_input_given_aux_quant"],
    )
    if len(doc["quant_alphabet"]) != law.n_quant:
        raise ValidationError(
            f"quant_alphabet has {len(doc['quant_alphabet'])} symbols, law rows imply {law.n_quant}"
        )
    if len(doc["aux_alphabet"]) != law.n_aux:
        raise ValidationError(
            f"aux_alphabet has {len(doc['aux_alphabet'])} symbols, law rows imply {law.n_aux}"
        )
    if law.n_input != channel.n_inputs:
        raise ValidationError(
            f"p_input_given_aux_quant implies {law.n_input} input letters, channel has {channel.n_inputs}"
        )
    return channel, law


def load_system(path):
    """Load (channel, law) from a JSON file; validation errors name the field."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"channel file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"channel file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"channel file {path} must contain a JSON object")
    return system_from_dict(doc)


def system_to_dict(channel: CqGpChannel, law: JointLaw, quant_alphabet=None, aux_alphabet=None):
    """Serialize (channel, law) to a system document."""
    quant_alphabet = (
        [str(i) for i in range(law.n_quant)] if quant_alphabet is None else list(quant_alphabet)
    )
    aux_alphabet = (
        [str(i) for i in range(law.n_aux)] if aux_alphabet is None else list(aux_alphabet)
    )
    return {
        "input_alphabet": list(channel.input_alphabet),
        "state_alphabet": list(channel.state_alphabet),
        "quant_alphabet": quant_alphabet,
        "aux_alphabet": aux_alphabet,
        "dim_output": channel.dim_output,
        "p_state": law.p_state.tolist(),
        "p_quant_given_state": law.p_quant_given_state.tolist(),
        "p_aux_given_quant": law.p_aux_given_quant.tolist(),
        "p_input_given_aux_quant": law.p_input_given_aux_quant.tolist(),
        "output_states": [
            [matrix_to_pairs(channel.state_mats[x, s]) for s in range(channel.n_states)]
            for x in range(channel.n_inputs)
        ],
    }
