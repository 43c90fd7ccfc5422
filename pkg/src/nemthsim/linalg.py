"""Thin wrappers around the scipy sparse solvers with uniform error reporting."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """A linear solve failed; carries the solver name and iteration count."""

    def __init__(self, name, message, iterations=None):
        self.name = name
        self.iterations = iterations
        detail = f" after {iterations} iterations" if iterations is not None else ""
        super().__init__(f"{name}: {message}{detail}")


def factorize(A, name="linear system"):
    """Sparse LU factorization; returns a solve callable."""
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(name, f"factorization failed ({exc})") from exc

    def solve(b):
        x = lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SolverError(name, "non-finite solution")
        return x

    return solve


def solve_direct(A, b, name="linear system"):
    return factorize(A, name)(b)


def solve_spd_increment(A, b, x_ref, name="linear system", rtol=1e-15, maxiter=1000):
    """Solve ``A x = b`` for symmetric positive definite ``A`` via the increment.

    Conjugate gradients is applied to ``A dx = b - A x_ref``; the residual is
    small relative to the increment, which keeps conservation errors of
    zero-column-sum operators at round-off.  Falls back to a sparse direct
    solve if the iteration stalls.
    """
    r0 = b - A @ x_ref
    if not np.any(r0):
        return x_ref.copy()
    dx, info = spla.cg(A, r0, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        try:
            lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(name, f"conjugate gradients stalled and factorization failed ({exc})",
                              iterations=maxiter) from exc
        dx = lu.solve(r0)
    x = x_ref + dx
    if not np.all(np.isfinite(x)):
        raise SolverError(name, "non-finite solution")
    return x


def gmres_solve(matvec, b, n, name="linear system", rtol=1e-13, x0=None, maxiter=400):
    """Restarted GMRES on a matrix-free operator.

    The tolerance is relative to ``|b|`` with an absolute floor, so a zero
    right-hand side returns immediately.
    """
    op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n)
    x, info = spla.gmres(op, b, x0=x0, rtol=rtol, atol=1e-300, restart=60, maxiter=maxiter,
                         callback=cb, callback_type="pr_norm")
    if info != 0:
        raise SolverError(name, "GMRES did not converge", iterations=count[0])
    return x
