"""Dense symmetric linear algebra kernels.

All matrices are plain ``numpy.ndarray`` objects of dtype float64.
Vectorization is column-stacking throughout the package: ``vec(X)`` stacks
the columns of ``X`` top to bottom, so ``vec(L X R) = kron(R.T, L) vec(X)``.
Matrices that are mathematically symmetric are re-symmetrized after every
arithmetic step to stop round-off drift.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.lapack import dpotrf, dpotri


class NumericalError(RuntimeError):
    """A linear-algebra kernel failed (non-PD factorization, no bracket, ...)."""


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-d float64 array and reject non-finite entries."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return (M + M.T)/2."""
    return 0.5 * (m + m.T)


def pd_floor(eigenvalues: np.ndarray) -> float:
    """Relative positive-definiteness floor: 1e-12 * max(1, max |lambda|)."""
    return 1e-12 * max(1.0, float(np.abs(eigenvalues).max(initial=0.0)))


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization of a p-by-q matrix."""
    return np.asarray(x).flatten(order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a length rows*cols vector column-wise."""
    v = np.asarray(v)
    if v.size != rows * cols:
        raise ValueError(f"cannot unvec length-{v.size} vector to {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with block (i, j) = a[i, j] * b.

    Satisfies vec(L X R) = kron(R.T, L) @ vec(X) for column-stacking vec.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ra, ca = a.shape
    rb, cb = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


def sym_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns (lam, V) with m = V @ diag(lam) @ V.T and V orthogonal.
    Raises NumericalError if the LAPACK iteration does not converge.
    """
    try:
        lam, v = np.linalg.eigh(symmetrize(m))
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"symmetric eigendecomposition failed: {e}") from e
    return lam[::-1].copy(), v[:, ::-1].copy()


def mat_pow_sym(m: np.ndarray, t: float) -> np.ndarray:
    """Fractional power of a symmetric PD matrix via eigendecomposition.

    Eigenvalues are floored at the relative pd_floor before powering so that
    negative exponents stay bounded. The result is exactly symmetric.
    """
    if not np.isfinite(t):
        raise ValueError(f"matrix power exponent must be finite, got {t}")
    lam, v = sym_eig(m)
    lam = np.maximum(lam, pd_floor(lam))
    return symmetrize((v * lam**t) @ v.T)


def pd_solve(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve M X = B for symmetric positive-definite M via Cholesky."""
    try:
        c = cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise NumericalError(
            f"Cholesky factorization failed for {m.shape[0]}x{m.shape[1]} matrix "
            f"(not positive definite): {e}"
        ) from e
    return cho_solve(c, b, check_finite=False)


_LOWER_MASKS: dict[int, np.ndarray] = {}


def _mirror_lower(a: np.ndarray) -> np.ndarray:
    """Full symmetric matrix from the lower triangle (upper holds garbage)."""
    n = a.shape[0]
    mask = _LOWER_MASKS.get(n)
    if mask is None:
        mask = np.tri(n, dtype=bool)
        _LOWER_MASKS[n] = mask
    return np.where(mask, a, a.T)


def pd_inverse_logdet(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant of a symmetric PD matrix in one factorization."""
    c, info = dpotrf(m, lower=1)
    if info != 0:
        raise NumericalError(
            f"Cholesky factorization failed for {m.shape[0]}x{m.shape[1]} matrix "
            f"(dpotrf info={info})"
        )
    logdet = 2.0 * float(np.log(np.diag(c)).sum())
    inv, info = dpotri(c, lower=1)
    if info != 0:
        raise NumericalError(f"triangular inversion failed (dpotri info={info})")
    return _mirror_lower(inv), logdet


def partial_trace_left(sigma: np.ndarray, alpha_r: np.ndarray, p: int) -> np.ndarray:
    """p-by-p matrix with (i, j) entry tr(Sigma (alpha_r kron E_ij)).

    E_ij is the p-by-p single-entry matrix. Computed by blocked summation
    over the q-by-q grid of p-by-p blocks of Sigma, never by materializing
    the Kronecker products.
    """
    q = alpha_r.shape[0]
    if sigma.shape[0] != p * q:
        raise ValueError(
            f"Sigma is {sigma.shape[0]}x{sigma.shape[1]}, expected {p * q} rows"
        )
    s4 = sigma.reshape(q, p, q, p)
    return symmetrize(np.einsum("kl,kilj->ij", alpha_r, s4, optimize=True))


def partial_trace_right(sigma: np.ndarray, alpha_l: np.ndarray, q: int) -> np.ndarray:
    """q-by-q matrix with (i, j) entry tr(Sigma (E_ij kron alpha_l))."""
    p = alpha_l.shape[0]
    if sigma.shape[0] != p * q:
        raise ValueError(
            f"Sigma is {sigma.shape[0]}x{sigma.shape[1]}, expected {p * q} rows"
        )
    s4 = sigma.reshape(q, p, q, p)
    return symmetrize(np.einsum("ab,iajb->ij", alpha_l, s4, optimize=True))


def save_matrix_csv(path, x: np.ndarray) -> None:
    """Write a matrix as CSV with a ``# rows=<r> cols=<c>`` header line."""
    x = as_matrix(x)
    with open(path, "w", encoding="ascii") as f:
        f.write(f"# rows={x.shape[0]} cols={x.shape[1]}\n")
        for row in x:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    """Read a matrix written one row per line, optional ``# rows= cols=`` header."""
    rows = []
    declared = None
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                fields = dict(
                    kv.split("=") for kv in line[1:].split() if "=" in kv
                )
                if "rows" in fields and "cols" in fields:
                    declared = (int(fields["rows"]), int(fields["cols"]))
                continue
            rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"no data rows in {path}")
    x = as_matrix(np.array(rows), name=str(path))
    if declared is not None and x.shape != declared:
        raise ValueError(f"{path}: header says {declared}, data is {x.shape}")
    return x
