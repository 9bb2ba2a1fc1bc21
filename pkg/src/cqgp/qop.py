"""Dense complex operator algebra for finite-dimensional quantum states.

Everything here is a plain numpy array wrapped in a thin validated type:
Hermitian operators, density operators, projectors and POVMs. Operations
cover tensor products, partial traces, eigendecomposition, spectral
projectors onto non-negative eigenspaces, pseudo-inverse square roots on
the support, and Born-rule measurement sampling.

Conventions:
  * all tolerances are relative to the spectral norm of the operand unless
    stated otherwise,
  * zero eigenvalues belong to the non-negative eigenspace,
  * the inverse square root follows the pseudo-inverse convention (kernel
    maps to zero),
  * complex matrices serialize to JSON as row-major arrays of [re, im] pairs.

All values are immutable after construction; every operation is a pure
function and safe to call concurrently.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalInvariantError, ValidationError

HERMITIAN_RTOL = 1e-10
EIG_RTOL = 1e-10
PROJECTOR_ATOL = 1e-9
POVM_ATOL = 1e-9
PROB_ATOL = 1e-8


def spectral_norm(mat: np.ndarray) -> float:
    """Largest singular value of a matrix."""
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


def _as_square_complex(mat, what: str) -> np.ndarray:
    arr = np.array(mat, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{what}: expected a square matrix, got shape {arr.shape}")
    return arr


class HermitianOperator:
    """A dense complex matrix validated to equal its conjugate transpose.

    The deviation ||A - A^dagger|| must not exceed 1e-10 times the spectral
    norm of A.
    """

    __slots__ = ("mat",)

    def __init__(self, mat):
        arr = _as_square_complex(mat, "HermitianOperator")
        dev = spectral_norm(arr - arr.conj().T)
        scale = spectral_norm(arr)
        if dev > HERMITIAN_RTOL * scale:
            raise ValidationError(
                f"matrix is not Hermitian: deviation {dev:.3e} exceeds "
                f"{HERMITIAN_RTOL:.0e} x spectral norm ({scale:.3e})"
            )
        arr.setflags(write=False)
        self.mat = arr

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace operator.

    Eigenvalues must be >= -1e-10 and the trace must equal 1 within 1e-10.
    """

    __slots__ = ("base",)

    def __init__(self, base):
        if not isinstance(base, HermitianOperator):
            base = HermitianOperator(base)
        eigs = _eigvalsh_mat(base.mat)
        if eigs.size and eigs[0] < -1e-10:
            raise ValidationError(f"density operator has negative eigenvalue {eigs[0]:.3e}")
        tr = float(np.trace(base.mat).real)
        if abs(tr - 1.0) > 1e-10:
            raise ValidationError(f"density operator trace {tr!r} differs from 1 by more than 1e-10")
        self.base = base

    @classmethod
    def trusted(cls, mat: np.ndarray) -> "DensityOperator":
        """Wrap a matrix known-valid by construction, skipping the eigenvalue check.

        Intended for tensor products of already-validated density operators,
        where revalidating would cost a full eigendecomposition.
        """
        arr = np.asarray(mat, dtype=complex)
        if arr.flags.writeable:
            arr = arr.copy()
            arr.setflags(write=False)
        herm = object.__new__(HermitianOperator)
        herm.mat = arr
        obj = object.__new__(cls)
        obj.base = herm
        return obj

    @property
    def mat(self) -> np.ndarray:
        return self.base.mat

    @property
    def dim(self) -> int:
        return self.base.dim

    def __repr__(self):
        return f"DensityOperator(dim={self.dim})"


class Projector:
    """Hermitian idempotent operator: P @ P = P within 1e-9, eigenvalues in {0, 1}."""

    __slots__ = ("base",)

    def __init__(self, base):
        if not isinstance(base, HermitianOperator):
            base = HermitianOperator(base)
        dev = spectral_norm(base.mat @ base.mat - base.mat)
        if dev > PROJECTOR_ATOL:
            raise ValidationError(f"operator is not idempotent: ||P^2 - P|| = {dev:.3e}")
        eigs = _eigvalsh_mat(base.mat)
        off = np.minimum(np.abs(eigs), np.abs(eigs - 1.0))
        if off.size and off.max() > PROJECTOR_ATOL:
            raise ValidationError(
                f"projector eigenvalues deviate from {{0,1}} by {off.max():.3e}"
            )
        self.base = base

    @property
    def mat(self) -> np.ndarray:
        return self.base.mat

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def rank(self) -> int:
        return int(round(float(np.trace(self.mat).real)))

    def __repr__(self):
        return f"Projector(dim={self.dim}, rank={self.rank})"


class Povm:
    """A positive operator-valued measure plus an explicit completion element.

    Elements must be PSD within 1e-10, the completion must be PSD, and the
    elements plus completion must sum to the identity within 1e-9. The
    completion is reported by measurement sampling as ``failure_index``.
    """

    __slots__ = ("elements", "completion")

    def __init__(self, elements, completion):
        elems = []
        for i, el in enumerate(elements):
            if not isinstance(el, HermitianOperator):
                el = HermitianOperator(el)
            lo = float(_eigvalsh_mat(el.mat)[0])
            if lo < -1e-10:
                raise NumericalInvariantError(
                    f"POVM element {i} has negative eigenvalue {lo:.3e}"
                )
            elems.append(el)
        if not isinstance(completion, HermitianOperator):
            completion = HermitianOperator(completion)
        lo = float(_eigvalsh_mat(completion.mat)[0])
        if lo < -1e-10:
            raise NumericalInvariantError(f"POVM completion has negative eigenvalue {lo:.3e}")
        dim = completion.dim
        total = completion.mat.copy()
        for el in elems:
            if el.dim != dim:
                raise NumericalInvariantError("POVM element dimensions do not match")
            total += el.mat
        dev = spectral_norm(total - np.eye(dim))
        if dev > POVM_ATOL:
            raise NumericalInvariantError(
                f"POVM elements plus completion differ from identity by {dev:.3e}"
            )
        self.elements = tuple(elems)
        self.completion = completion

    @property
    def dim(self) -> int:
        return self.completion.dim

    @property
    def failure_index(self) -> int:
        """Outcome index reserved for the completion element."""
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __repr__(self):
        return f"Povm(dim={self.dim}, outcomes={len(self.elements)})"


def tensor(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Kronecker product of two Hermitian operators."""
    return HermitianOperator(np.kron(a.mat, b.mat))


def tensor_power_mat(mat: np.ndarray, n: int) -> np.ndarray:
    """n-fold Kronecker power of a raw matrix."""
    out = np.array([[1.0 + 0j]])
    for _ in range(n):
        out = np.kron(out, mat)
    return out


def partial_trace(op: HermitianOperator, factor_dims, keep) -> HermitianOperator:
    """Trace out all tensor factors except ``keep``.

    ``factor_dims`` lists the dimension of each tensor factor (their product
    must equal the operator dimension); ``keep`` is the set of factor indices
    to retain, returned in ascending factor order. The trace is preserved.
    """
    dims = [int(d) for d in factor_dims]
    if any(d <= 0 for d in dims):
        raise ValidationError("factor dimensions must be positive")
    total = int(np.prod(dims))
    if total != op.dim:
        raise ValidationError(
            f"product of factor dims {dims} is {total}, operator dim is {op.dim}"
        )
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValidationError(f"keep indices {keep} out of range for {len(dims)} factors")
    mat = op.mat
    return HermitianOperator(_partial_trace_mat(mat, dims, keep))


def _partial_trace_mat(mat: np.ndarray, dims, keep) -> np.ndarray:
    k = len(dims)
    tensor_view = mat.reshape(tuple(dims) + tuple(dims))
    # Trace out unwanted factors from the highest index down so the axis
    # bookkeeping of the remaining factors stays valid.
    remaining = list(range(k))
    for idx in sorted(set(range(k)) - set(keep), reverse=True):
        pos = remaining.index(idx)
        m = len(remaining)
        tensor_view = np.trace(tensor_view, axis1=pos, axis2=pos + m)
        remaining.pop(pos)
    d_out = int(np.prod([dims[i] for i in remaining])) if remaining else 1
    return tensor_view.reshape(d_out, d_out)


def _eigh_mat(mat: np.ndarray):
    """np.linalg.eigh, routed through the real-symmetric driver when exact."""
    if not np.any(mat.imag):
        w, v = np.linalg.eigh(mat.real)
        return w, v.astype(complex)
    return np.linalg.eigh(mat)


def _eigvalsh_mat(mat: np.ndarray) -> np.ndarray:
    if not np.any(mat.imag):
        return np.linalg.eigvalsh(mat.real)
    return np.linalg.eigvalsh(mat)


def eigh(a: HermitianOperator):
    """Eigendecomposition of a Hermitian operator.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors as the columns of a unitary matrix, so
    that ``a = V @ diag(w) @ V^dagger``.
    """
    w, v = _eigh_mat(a.mat)
    return w[::-1].copy(), v[:, ::-1].copy()


def _projector_from_columns(v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    cols = v[:, mask]
    p = cols @ cols.conj().T
    return (p + p.conj().T) / 2.0


def nonneg_eigenspace_projector(a: HermitianOperator) -> Projector:
    """Projector onto the span of eigenvectors with eigenvalue >= -tol.

    tol is 1e-10 times the spectral norm, so zero eigenvalues (the kernel)
    are included. The zero matrix therefore maps to the identity.
    """
    w, v = _eigh_mat(a.mat)
    tol = EIG_RTOL * (abs(w[0]) if w.size else 0.0)
    tol = max(tol, EIG_RTOL * (abs(w[-1]) if w.size else 0.0))
    return Projector(_projector_from_columns(v, w >= -tol))


def positive_eigenspace_projector(a: HermitianOperator) -> Projector:
    """Projector onto eigenvalues strictly greater than tol; the kernel is excluded."""
    w, v = _eigh_mat(a.mat)
    tol = EIG_RTOL * max(abs(w[0]) if w.size else 0.0, abs(w[-1]) if w.size else 0.0)
    return Projector(_projector_from_columns(v, w > tol))


def support_projector(a: HermitianOperator) -> Projector:
    """Projector onto the support (eigenvalues with |w| > tol) of a PSD operator."""
    w, v = _eigh_mat(a.mat)
    tol = EIG_RTOL * max(abs(w[0]) if w.size else 0.0, abs(w[-1]) if w.size else 0.0)
    return Projector(_projector_from_columns(v, np.abs(w) > tol))


def spectral_test(rho: DensityOperator, sigma: DensityOperator, c: float):
    """Threshold test between two states.

    Returns ``(projector, value)`` where the projector spans the non-negative
    eigenspace of ``rho - c * sigma`` and ``value = Tr[projector @ rho]`` lies
    in [0, 1].
    """
    if rho.dim != sigma.dim:
        raise ValidationError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    if c <= 0:
        raise ValidationError("threshold c must be positive")
    diff = HermitianOperator(rho.mat - c * sigma.mat)
    proj = nonneg_eigenspace_projector(diff)
    value = float(np.einsum("ij,ji->", proj.mat, rho.mat).real)
    return proj, min(max(value, 0.0), 1.0)


def inv_sqrt_on_support(a: HermitianOperator) -> HermitianOperator:
    """Pseudo-inverse square root of a PSD operator.

    Eigenvalues above tol map to lambda**-0.5 and the kernel maps to zero;
    eigenvalues below -tol raise. tol is 1e-10 times the spectral norm.
    """
    w, v = _eigh_mat(a.mat)
    tol = EIG_RTOL * max(abs(w[0]) if w.size else 0.0, abs(w[-1]) if w.size else 0.0)
    if w.size and w[0] < -tol:
        raise ValidationError(f"operator has negative eigenvalue {w[0]:.3e}; not PSD")
    inv = np.where(w > tol, 1.0 / np.sqrt(np.maximum(w, tol)), 0.0)
    m = (v * inv) @ v.conj().T
    return HermitianOperator((m + m.conj().T) / 2.0)


def measurement_probabilities(povm: Povm, rho: DensityOperator) -> np.ndarray:
    """Born-rule outcome probabilities including the completion outcome (last)."""
    if povm.dim != rho.dim:
        raise ValidationError(f"dimension mismatch: povm {povm.dim} vs state {rho.dim}")
    probs = np.empty(len(povm.elements) + 1)
    rho_t = rho.mat.T.copy()
    for i, el in enumerate(povm.elements):
        probs[i] = float(np.sum(el.mat * rho_t).real)
    probs[-1] = float(np.sum(povm.completion.mat * rho_t).real)
    total = probs.sum()
    if abs(total - 1.0) > PROB_ATOL:
        raise NumericalInvariantError(
            f"measurement probabilities sum to {total!r}, deviating from 1 by more than {PROB_ATOL:.0e}"
        )
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def sample_measurement(povm: Povm, rho: DensityOperator, rng: np.random.Generator) -> int:
    """Sample a measurement outcome; the completion maps to ``povm.failure_index``."""
    probs = measurement_probabilities(povm, rho)
    return int(rng.choice(len(probs), p=probs))


def matrix_to_pairs(mat: np.ndarray):
    """Serialize a complex matrix as row-major nested lists of [re, im] pairs."""
    arr = np.asarray(mat, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in arr]


def matrix_from_pairs(data, what: str = "matrix") -> np.ndarray:
    """Parse a complex matrix from nested [re, im] pairs, naming bad entries."""
    if not isinstance(data, list) or not data:
        raise ValidationError(f"{what}: expected a non-empty list of rows")
    n = len(data)
    out = np.zeros((n, len(data[0])), dtype=complex)
    for i, row in enumerate(data):
        if not isinstance(row, list) or len(row) != out.shape[1]:
            raise ValidationError(f"{what}: row {i} has inconsistent length")
        for j, entry in enumerate(row):
            if (
                not isinstance(entry, (list, tuple))
                or len(entry) != 2
                or not all(isinstance(x, (int, float)) for x in entry)
            ):
                raise ValidationError(
                    f"{what}: entry ({i},{j}) is not a [re, im] pair: {entry!r}"
                )
            out[i, j] = complex(entry[0], entry[1])
    return out
