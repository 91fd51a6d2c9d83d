"""Dense operator and superoperator algebra.

Vectorization is column-stacking throughout: ``vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)``.
Operators are plain complex ``numpy`` arrays; superoperators on a d-dimensional
Hilbert space are (d*d, d*d) arrays acting on ``vec(rho)``.

Two-level conventions: basis order (|e>, |g>), so ``SZ = diag(1, -1)`` and
``SP = |e><g|`` raises.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateKernelError,
    DimensionMismatchError,
    NonHermitianError,
    ProjectionViolationError,
    SolverFailureError,
    UnstableGeneratorError,
)

MAX_JOINT_DIM = 64
HERM_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SP = np.array([[0, 1], [0, 0]], dtype=complex)
SM = SP.T.copy()
KET_E = np.array([1, 0], dtype=complex)
KET_G = np.array([0, 1], dtype=complex)
PROJ_E = np.outer(KET_E, KET_E.conj())
PROJ_G = np.outer(KET_G, KET_G.conj())
PAULI = {"x": SX, "y": SY, "z": SZ}


def as_operator(A, name="operator") -> np.ndarray:
    """Validate a square, finite matrix and return it as complex array."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {A.shape}")
    if A.shape[0] < 1:
        raise DimensionMismatchError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def superop_dim(S) -> int:
    n = S.shape[0]
    d = int(round(np.sqrt(n)))
    if d * d != n or S.shape != (n, n):
        raise DimensionMismatchError(f"superoperator shape {S.shape} is not (d^2, d^2)")
    return d


def vec(A) -> np.ndarray:
    return np.asarray(A).reshape(-1, order="F")


def unvec(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape((d, d), order="F")


def dag(A) -> np.ndarray:
    return np.conj(np.transpose(A))


def herm_defect(A) -> float:
    A = np.asarray(A)
    return float(np.max(np.abs(A - dag(A)))) if A.size else 0.0


def sandwich(A, B) -> np.ndarray:
    """Superoperator of rho -> A rho B."""
    return np.kron(np.asarray(B).T, np.asarray(A))


def spre(A) -> np.ndarray:
    A = np.asarray(A)
    return sandwich(A, np.eye(A.shape[0]))


def spost(B) -> np.ndarray:
    B = np.asarray(B)
    return sandwich(np.eye(B.shape[0]), B)


def apply_superop(S, rho) -> np.ndarray:
    rho = np.asarray(rho)
    return unvec(S @ vec(rho), rho.shape[0])


def build_dissipator(X) -> np.ndarray:
    """Superoperator of rho -> X rho X^dag - (X^dag X rho + rho X^dag X)/2."""
    X = as_operator(X, "X")
    XdX = dag(X) @ X
    return sandwich(X, dag(X)) - 0.5 * (spre(XdX) + spost(XdX))


def build_dissipator_pair(A, B) -> np.ndarray:
    """Superoperator of rho -> A rho B^dag - (B^dag A rho + rho B^dag A)/2."""
    A = as_operator(A, "A")
    B = as_operator(B, "B")
    BdA = dag(B) @ A
    return sandwich(A, dag(B)) - 0.5 * (spre(BdA) + spost(BdA))


def commutator_superop(H) -> np.ndarray:
    """Superoperator of rho -> -i[H, rho] without a Hermiticity check."""
    H = np.asarray(H, dtype=complex)
    return -1j * (spre(H) - spost(H))


def build_hamiltonian_superop(H, tol: float = HERM_TOL) -> np.ndarray:
    """Superoperator of rho -> -i[H, rho]."""
    H = as_operator(H, "H")
    scale = max(1.0, float(np.max(np.abs(H))))
    if herm_defect(H) > tol * scale:
        raise NonHermitianError(f"H is not Hermitian (defect {herm_defect(H):.3e})")
    return commutator_superop(H)


def lindbladian(H, channels=()) -> np.ndarray:
    """-i[H, .] + sum_k rate_k D_{L_k}; channels are (L, rate) pairs."""
    S = build_hamiltonian_superop(H)
    for L, rate in channels:
        S = S + rate * build_dissipator(L)
    return S


def trace_defect(S) -> float:
    """Max |vec(1)^dag S|: zero for trace-preserving generators."""
    d = superop_dim(S)
    return float(np.max(np.abs(vec(np.eye(d)).conj() @ S)))


def partial_trace(rho, dims, keep: int) -> np.ndarray:
    """Partial trace of a bipartite operator; keep=0 keeps the first factor."""
    d0, d1 = dims
    r = np.asarray(rho).reshape(d0, d1, d0, d1)
    if keep == 0:
        return np.einsum("ajbj->ab", r)
    return np.einsum("iaib->ab", r)


def random_density_matrix(d: int, rng) -> np.ndarray:
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = G @ dag(G)
    return rho / np.trace(rho)


def random_hermitian(d: int, rng, scale: float = 1.0) -> np.ndarray:
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (G + dag(G)) / 2


def random_operator(d: int, rng, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))


def orthonormal_operator_basis(d: int) -> list[np.ndarray]:
    """Hermitian Hilbert-Schmidt orthonormal basis; the first element is 1/sqrt(d)."""
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            A = np.zeros((d, d), dtype=complex)
            A[j, k] = A[k, j] = 1 / np.sqrt(2)
            basis.append(A)
            B = np.zeros((d, d), dtype=complex)
            B[j, k] = -1j / np.sqrt(2)
            B[k, j] = 1j / np.sqrt(2)
            basis.append(B)
    for l in range(1, d):
        D = np.zeros((d, d), dtype=complex)
        D[np.arange(l), np.arange(l)] = 1.0
        D[l, l] = -l
        basis.append(D / np.sqrt(l * (l + 1)))
    return basis


@dataclass(frozen=True)
class GeneratorDecomposition:
    """Generator split as -i[H, .] + sum_ij C_ij (F_i . F_j^dag - {F_j^dag F_i, .}/2)."""

    hamiltonian: np.ndarray
    kossakowski: np.ndarray
    basis: list = field(repr=False)
    trace_defect: float


def decompose_generator(S) -> GeneratorDecomposition:
    """Split a Hermiticity-preserving generator into Hamiltonian and Kossakowski parts."""
    d = superop_dim(S)
    F = orthonormal_operator_basis(d)
    n = len(F)
    c = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            c[i, j] = np.vdot(sandwich(F[i], dag(F[j])), S)
    Fop = sum(c[i, 0] * F[i] for i in range(1, n)) / np.sqrt(d)
    H = (dag(Fop) - Fop) / 2j
    C = c[1:, 1:]
    C = (C + dag(C)) / 2
    G = c[0, 0] / (2 * d) * np.eye(d) + (Fop + dag(Fop)) / 2
    G_tp = -0.5 * sum(C[i, j] * dag(F[j + 1]) @ F[i + 1] for i in range(n - 1) for j in range(n - 1)) if n > 1 else 0 * G
    return GeneratorDecomposition(
        hamiltonian=(H + dag(H)) / 2,
        kossakowski=C,
        basis=F[1:],
        trace_defect=float(np.max(np.abs(G - G_tp))),
    )


def choi_matrix(S, d_in: int, d_out: int) -> np.ndarray:
    """Choi matrix sum_ij |i><j| (x) S(|i><j|) of a linear map given as a (d_out^2, d_in^2) matrix."""
    C = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            Eij = np.zeros((d_in, d_in), dtype=complex)
            Eij[i, j] = 1.0
            C += np.kron(Eij, unvec(S @ vec(Eij), d_out))
    return C


@dataclass(frozen=True)
class SpectralSplit:
    """Kernel / complement splitting of a generator with no unstable modes."""

    kernel_basis: list
    cokernel_basis: list
    R: np.ndarray
    gap: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def kernel_dim(self) -> int:
        return len(self.kernel_basis)

    @property
    def right(self) -> np.ndarray:
        """Kernel vectors as columns."""
        return np.stack([vec(A) for A in self.kernel_basis], axis=1)

    @property
    def left(self) -> np.ndarray:
        """Dual vectors as columns, with left.conj().T @ right = 1."""
        return np.stack([vec(A) for A in self.cokernel_basis], axis=1)


def spectral_split(L0, tol: float = 1e-9, gram_cond_max: float = 1e8) -> SpectralSplit:
    """Kernel projector R, biorthonormal kernel bases and spectral gap of L0."""
    L0 = np.asarray(L0, dtype=complex)
    d = superop_dim(L0)
    if d > MAX_JOINT_DIM:
        raise DimensionMismatchError(f"dimension {d} exceeds dense limit {MAX_JOINT_DIM}")
    if not np.all(np.isfinite(L0)):
        raise ValueError("L0 has non-finite entries")
    n = d * d
    scale = float(np.linalg.norm(L0))
    thr = tol * scale
    evals = sla.eigvals(L0)
    if scale == 0.0:
        basis = [unvec(col, d) for col in np.eye(n, dtype=complex).T]
        return SpectralSplit(basis, basis, np.eye(n, dtype=complex), 0.0, evals)
    if np.any(evals.real > thr):
        worst = evals[np.argmax(evals.real)]
        raise UnstableGeneratorError(f"eigenvalue {worst:.3e} has positive real part")
    in_kernel = np.abs(evals) < thr
    rest = evals[~in_kernel]
    if rest.size and np.min(np.abs(rest.real)) <= thr:
        worst = rest[np.argmin(np.abs(rest.real))]
        raise UnstableGeneratorError(f"non-decaying eigenvalue {worst:.3e} outside the kernel")
    m = int(np.count_nonzero(in_kernel))
    if m == 0:
        return SpectralSplit([], [], np.zeros((n, n), dtype=complex), float(np.min(np.abs(rest.real))), evals)

    _, s, vh = np.linalg.svd(L0)
    _, s_l, vh_l = np.linalg.svd(dag(L0))
    nullity = int(np.count_nonzero(s < thr))
    if nullity != m or int(np.count_nonzero(s_l < thr)) != m:
        raise DegenerateKernelError(
            f"zero eigenvalue has algebraic multiplicity {m} but geometric multiplicity {nullity}"
        )
    V = dag(vh[n - m:])
    W = dag(vh_l[n - m:])
    G = dag(W) @ V
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > gram_cond_max:
        raise DegenerateKernelError(f"kernel Gram matrix condition number {cond:.3e} (Jordan block)")
    W = W @ dag(np.linalg.inv(G))
    R = V @ dag(W)
    gap = float(np.min(np.abs(rest.real))) if rest.size else 0.0
    return SpectralSplit(
        kernel_basis=[unvec(V[:, k], d) for k in range(m)],
        cokernel_basis=[unvec(W[:, k], d) for k in range(m)],
        R=R,
        gap=gap,
        eigenvalues=evals,
    )


def shifted_solve(L0, shift: complex, Y, R, tol: float = 1e-9) -> np.ndarray:
    """Solve (L0 - shift) X = Y with X and Y in the complement of the kernel.

    ``Y`` may be a single vectorized operator or a matrix whose columns are.
    """
    L0 = np.asarray(L0, dtype=complex)
    R = np.asarray(R, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    n = L0.shape[0]
    y_norm = float(np.linalg.norm(Y))
    if y_norm == 0.0:
        return np.zeros_like(Y)
    leak = float(np.linalg.norm(R @ Y))
    if leak > tol * y_norm * max(1.0, float(np.linalg.norm(R, 2))):
        raise ProjectionViolationError(f"right side has kernel component {leak:.3e} (|Y| = {y_norm:.3e})")
    M = L0 - shift * np.eye(n) + R
    try:
        X = np.linalg.solve(M, Y)
    except np.linalg.LinAlgError as exc:
        raise SolverFailureError(f"shifted operator is singular at shift {shift}") from exc
    X = X - R @ X
    resid = float(np.linalg.norm((L0 - shift * np.eye(n)) @ X - Y))
    bound = tol * (y_norm + (float(np.linalg.norm(L0)) + abs(shift)) * float(np.linalg.norm(X)))
    if resid > bound:
        raise SolverFailureError(f"shifted solve residual {resid:.3e} exceeds {bound:.3e}")
    return X
