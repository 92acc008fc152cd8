"""Sparse linear solves and graph reachability shared by the engines."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import EngineError

GS_TOL = 1e-10
GS_MAX_SWEEPS = 100_000


def gauss_seidel(A, b, tol=GS_TOL, max_sweeps=GS_MAX_SWEEPS):
    """Gauss-Seidel iteration on a square csr matrix; returns (x, sweeps)."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag == 0):
        raise EngineError("Gauss-Seidel fallback needs a non-zero diagonal")
    x = np.zeros(n)
    indptr, indices, data = A.indptr, A.indices, A.data
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            s = b[i] - np.dot(data[lo:hi], x[indices[lo:hi]]) + diag[i] * x[i]
            new = s / diag[i]
            delta = max(delta, abs(new - x[i]))
            x[i] = new
        if delta < tol:
            return x, sweep
    raise EngineError(f"Gauss-Seidel did not converge in {max_sweeps} sweeps")


def solve_linear(A, b, where=None):
    """Solve ``A x = b`` by sparse LU, falling back to Gauss-Seidel.

    *where* maps local indices to a description used in error messages.
    """
    A = sp.csc_matrix(A)
    if A.shape[0] == 0:
        return np.zeros(0), {"method": "empty"}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            lu = spla.splu(A)
            x = lu.solve(np.asarray(b, dtype=float))
        if np.all(np.isfinite(x)):
            return x, {"method": "lu"}
    except (RuntimeError, Warning):
        pass
    try:
        x, sweeps = gauss_seidel(A, np.asarray(b, dtype=float))
        return x, {"method": "gauss-seidel", "iterations": sweeps}
    except EngineError as exc:
        detail = ""
        if where is not None:
            detail = f" (system over states {where})"
        raise EngineError(f"singular linear system{detail}: {exc}") from None


def backward_reach(adj, start, allowed):
    """States reaching *start* through states in *allowed* (start included).

    ``adj @ v`` is positive exactly on the predecessors of the support of v.
    """
    reached = start.copy()
    frontier = start.copy()
    while frontier.any():
        hits = (adj @ frontier.astype(np.float64)) > 0
        new = hits & allowed & ~reached
        reached |= new
        frontier = new
    return reached


def structure(P):
    S = sp.csr_matrix(P, copy=True)
    S.data = np.ones_like(S.data)
    return S
