"""Dense vector/matrix kernels and a thin SVD.

Matrices are 2-D float64 ndarrays in C (row-major) order; vectors are 1-D
float64 ndarrays.  Everything here is pure and deterministic: the same input
bytes always produce the same output bytes, which is what makes golden tests
and exact replay possible further up the stack.

The SVD is a one-sided Jacobi (Hestenes) iteration with cyclic sweeps, with a
Gram-Schmidt QR pre-reduction for tall matrices so the sweeps rotate short
columns.  It is exposed both for a single matrix (``thin_svd``) and for a
stack of matrices sharing one shape (``thin_svd_stack``); the stacked form is
what keeps singular-value thresholding affordable when a simulation carries
one matrix per client.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative Gram tolerance: a column pair (i, j) is rotated only while
# |<c_i, c_j>| > _JACOBI_TOL * ||c_i|| * ||c_j||.
_JACOBI_TOL = 1e-12
_MAX_SWEEPS = 100
# Columns with squared norm below _FLUSH_REL times the largest are set to
# exact zero: far below the eps * sigma_max noise floor, they are roundoff
# residue of rank deficiency, and letting them shrink into the subnormal
# range stalls the relative convergence test.
_FLUSH_REL = 1e-60


class LinalgError(ValueError):
    """Bad input (dimension mismatch, non-finite entries) or failed SVD."""


@dataclass
class SvdResult:
    """Thin SVD ``W = U @ diag(s) @ V.T`` with r = min(n, m) columns.

    ``s`` is sorted nonincreasing; columns of U and V are orthonormal.  Sign
    convention: in each column of U the entry of largest magnitude is
    nonnegative (magnitude ties broken by lowest row index).
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise LinalgError(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise LinalgError(f"expected a 1-D vector, got shape {x.shape}")
    return x


def mat_vec(A, x) -> np.ndarray:
    """Return ``A @ x``."""
    A, x = _as_matrix(A), _as_vector(x)
    if A.shape[1] != x.shape[0]:
        raise LinalgError(f"mat_vec: A is {A.shape}, x has length {x.shape[0]}")
    return A @ x


def mat_transpose_vec(A, y) -> np.ndarray:
    """Return ``A.T @ y``."""
    A, y = _as_matrix(A), _as_vector(y)
    if A.shape[0] != y.shape[0]:
        raise LinalgError(f"mat_transpose_vec: A is {A.shape}, y has length {y.shape[0]}")
    return A.T @ y


def _round_robin_schedule(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fixed tournament schedule covering every column pair once per sweep.

    Returns rounds of disjoint (p, q) index arrays.  Disjoint pairs commute,
    so rotating a whole round at once equals rotating its pairs one by one.
    """
    players = list(range(m)) + ([m] if m % 2 else [])  # m == dummy slot
    half = len(players) // 2
    rounds = []
    for _ in range(len(players) - 1):
        ps, qs = [], []
        for i in range(half):
            a, b = players[i], players[-1 - i]
            if a != m and b != m:
                ps.append(min(a, b))
                qs.append(max(a, b))
        if ps:
            rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_orthogonalize(work: np.ndarray, V: np.ndarray) -> None:
    """Cyclic one-sided Jacobi on each matrix of a stack, in place.

    ``work`` has shape (B, m, n): member b holds the m columns of a matrix
    as contiguous rows of length n.  Rotations are accumulated into ``V`` of
    shape (B, m, m) (same rows-as-columns layout).  Pairs are visited in a
    fixed round-robin cycle; a pair is rotated only while it violates the
    relative Gram tolerance, so each stack member follows exactly the
    trajectory it would follow alone.
    """
    B, m, n = work.shape
    sq = np.einsum("bjn,bjn->bj", work, work)
    schedule = _round_robin_schedule(m)
    for _ in range(_MAX_SWEEPS):
        dead = sq <= _FLUSH_REL * sq.max(axis=1, keepdims=True)
        if dead.any():
            work[dead] = 0.0
            sq[dead] = 0.0
        rotated = False
        for ps, qs in schedule:
            P = work[:, ps, :]
            Q = work[:, qs, :]
            gamma = np.einsum("bkn,bkn->bk", P, Q)
            thresh = _JACOBI_TOL * (np.sqrt(sq[:, ps]) * np.sqrt(sq[:, qs]))
            mask = np.abs(gamma) > thresh
            if not mask.any():
                continue
            rotated = True
            g = np.where(mask, gamma, 1.0)  # dummy divisor where skipped
            diff = sq[:, qs] - sq[:, ps]
            zeta = diff / (2.0 * g)
            # tiny-angle branch: computing t as gamma/diff directly avoids
            # the overflow in zeta**2 that would round the rotation to an
            # exact identity and stall convergence
            tiny = np.abs(zeta) > 1e8
            zc = np.clip(zeta, -1e8, 1e8)
            base = np.where(
                zc == 0.0,
                1.0,
                np.sign(zc) / (np.abs(zc) + np.sqrt(1.0 + zc * zc)),
            )
            t = np.where(tiny, g / np.where(tiny, diff, 1.0), base)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            cm = np.where(mask, c, 1.0)[:, :, None]
            sm = np.where(mask, s, 0.0)[:, :, None]
            mask3 = mask[:, :, None]
            newP = cm * P - sm * Q
            newQ = sm * P + cm * Q
            work[:, ps, :] = np.where(mask3, newP, P)
            work[:, qs, :] = np.where(mask3, newQ, Q)
            VP = V[:, ps, :]
            VQ = V[:, qs, :]
            V[:, ps, :] = np.where(mask3, cm * VP - sm * VQ, VP)
            V[:, qs, :] = np.where(mask3, sm * VP + cm * VQ, VQ)
            sq[:, ps] = np.where(mask, np.einsum("bkn,bkn->bk", newP, newP), sq[:, ps])
            sq[:, qs] = np.where(mask, np.einsum("bkn,bkn->bk", newQ, newQ), sq[:, qs])
        if not rotated:
            return
    raise LinalgError(f"jacobi SVD did not converge in {_MAX_SWEEPS} sweeps")


def _fill_null_columns(U: np.ndarray, sigma: np.ndarray) -> None:
    """Replace U columns belonging to zero singular values with deterministic
    orthonormal completions (first standard basis vector not in the span)."""
    B, n, r = U.shape
    for b in range(B):
        dead = np.nonzero(sigma[b] == 0.0)[0]
        for j in dead:
            live = [jj for jj in range(r) if jj not in dead[dead >= j]]
            basis = U[b][:, live] if live else np.zeros((n, 0))
            for cand in range(n):
                e = np.zeros(n)
                e[cand] = 1.0
                # two rounds of Gram-Schmidt for stability
                for _ in range(2):
                    e = e - basis @ (basis.T @ e)
                nrm = np.sqrt(e @ e)
                if nrm > 0.5:
                    U[b][:, j] = e / nrm
                    break
            else:  # pragma: no cover - n candidates always suffice
                raise LinalgError("failed to complete orthonormal basis")


def _cgs2_qr_stack(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched QR of tall stacks via classical Gram-Schmidt, run twice.

    ``W`` has shape (B, n, m) with n >= m.  Returns Q (B, n, m) with
    orthonormal-or-zero columns and upper-triangular R (B, m, m) with
    ``W = Q @ R`` to machine precision.  A column whose residual after
    orthogonalization drops below 1e-12 of its original norm is numerically
    dependent: its Q column and R diagonal are zeroed rather than normalizing
    cancellation noise (which would not be orthogonal to the span).
    """
    B, n, m = W.shape
    Q = np.zeros((B, n, m))
    R = np.zeros((B, m, m))
    for j in range(m):
        v = W[:, :, j].copy()
        wnorm = np.sqrt(np.einsum("bn,bn->b", v, v))
        for _ in range(2):  # reorthogonalization pass keeps Q orthonormal
            coeff = np.einsum("bnk,bn->bk", Q[:, :, :j], v)
            R[:, :j, j] += coeff
            v -= np.einsum("bnk,bk->bn", Q[:, :, :j], coeff)
        nrm = np.sqrt(np.einsum("bn,bn->b", v, v))
        alive = nrm > 1e-12 * wnorm
        R[:, j, j] = np.where(alive, nrm, 0.0)
        safe = np.where(alive, nrm, 1.0)
        Q[:, :, j] = np.where(alive[:, None], v / safe[:, None], 0.0)
    return Q, R


def thin_svd_stack(W: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD of a stack of matrices, shape (B, n, m) -> (U, s, V).

    Returns arrays of shape (B, n, r), (B, r), (B, m, r) with r = min(n, m).
    Same conventions as :func:`thin_svd` applied per stack member.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 3:
        raise LinalgError(f"expected a stack of matrices, got shape {W.shape}")
    if not np.isfinite(W).all():
        raise LinalgError("thin_svd: non-finite entries")
    B, n, m = W.shape
    if m > n:
        Vt, s, Ut = thin_svd_stack(W.transpose(0, 2, 1))
        _apply_sign_convention(Ut, Vt)
        return Ut, s, Vt

    Q = None
    if n > m:  # QR pre-reduction so the sweeps run on short m-length columns
        Q, R = _cgs2_qr_stack(W)
        work = R.transpose(0, 2, 1).copy()
    else:
        work = W.transpose(0, 2, 1).copy()  # columns as contiguous rows
    V = np.broadcast_to(np.eye(m), (B, m, m)).copy()
    _jacobi_orthogonalize(work, V)

    sigma = np.sqrt(np.einsum("bjn,bjn->bj", work, work))
    order = np.argsort(-sigma, axis=1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=1)
    work = np.take_along_axis(work, order[:, :, None], axis=1)
    V = np.take_along_axis(V, order[:, :, None], axis=1)

    k = work.shape[2]  # m, or m after QR reduction (columns live in R-space)
    Ucore = np.zeros((B, k, m))
    pos = sigma > 0.0
    for b in range(B):
        j = np.nonzero(pos[b])[0]
        Ucore[b][:, j] = (work[b][j, :] / sigma[b, j, None]).T
    U = Ucore if Q is None else Q @ Ucore
    V = np.ascontiguousarray(V.transpose(0, 2, 1))
    if not pos.all():
        _fill_null_columns(U, sigma)

    _apply_sign_convention(U, V)
    return U, sigma, V


def _apply_sign_convention(U: np.ndarray, V: np.ndarray) -> None:
    """Flip (U, V) column pairs so each U column's largest-magnitude entry is
    nonnegative (magnitude ties broken by lowest row index).  In place."""
    lead = np.argmax(np.abs(U), axis=1)  # (B, r), first index on ties
    flip = np.take_along_axis(U, lead[:, None, :], axis=1)[:, 0, :] < 0.0
    sgn = np.where(flip, -1.0, 1.0)
    U *= sgn[:, None, :]
    V *= sgn[:, None, :]


def thin_svd(W) -> SvdResult:
    """Thin SVD of a single matrix via cyclic one-sided Jacobi."""
    W = _as_matrix(W)
    U, s, V = thin_svd_stack(W[None])
    return SvdResult(U=U[0], s=s[0], V=V[0])


def svd_reconstruct(res: SvdResult) -> np.ndarray:
    return (res.U * res.s[None, :]) @ res.V.T


def _check_finite(a: np.ndarray) -> np.ndarray:
    if not np.isfinite(a).all():
        raise LinalgError("non-finite entries")
    return a


def l1_norm(v) -> float:
    return float(np.sum(np.abs(_check_finite(np.asarray(v, dtype=np.float64)))))


def linf_norm(v) -> float:
    return float(np.max(np.abs(_check_finite(np.asarray(v, dtype=np.float64)))))


def l2_norm(v) -> float:
    v = _check_finite(np.asarray(v, dtype=np.float64))
    return float(np.sqrt(np.sum(v * v)))


def frobenius_norm(W) -> float:
    return l2_norm(np.asarray(W, dtype=np.float64).ravel())


def nuclear_norm(W) -> float:
    """Sum of singular values."""
    return float(np.sum(thin_svd(W).s))


def spectral_norm(W) -> float:
    """Largest singular value."""
    return float(thin_svd(W).s[0])
