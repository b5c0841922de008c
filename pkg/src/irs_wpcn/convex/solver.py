"""Log-barrier interior-point solver for :class:`ConicProgram`.

Dense Newton steps on ``-t * objective + barrier``; problems here have at
most a few hundred real variables, so forming and factoring the Hessian
directly is cheaper than anything clever. A phase-I program is solved when
the supplied start point is not strictly feasible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .program import ConicProgram, LMI, QuadConstraint

LN2 = np.log(2.0)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass
class ConicSolution:
    x: np.ndarray
    objective: float
    status: Status
    primal_residual: float
    stationarity: float
    gap: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class _Barrier:
    def __init__(self, prog: ConicProgram):
        self.prog = prog
        self.n = prog.n
        logs = prog.logs
        self.la = np.array([t.arg for t in logs]).reshape(len(logs), prog.n)
        self.la0 = np.array([t.arg0 for t in logs])
        self.ld = np.array([t.scale for t in logs]).reshape(len(logs), prog.n)
        self.ld0 = np.array([t.scale0 for t in logs])
        self.lw = np.array([t.weight for t in logs]) / LN2
        self.ls = np.array([t.shift for t in logs])
        self.mod_pairs = np.stack([prog.mod_re, prog.mod_im], axis=1) if prog.mod_re.size else None
        self.b2 = prog.mod_bound**2

    # objective --------------------------------------------------------------
    def objective(self, x: np.ndarray) -> float:
        p = self.prog
        val = float(p.c @ x + p.c0)
        if self.lw.size:
            A = self.la @ x + self.la0
            D = self.ld @ x + self.ld0
            val += float(np.sum(self.lw * D * np.log((A + self.ls * D) / D)))
        return val

    def _log_domain(self, x: np.ndarray) -> bool:
        if not self.lw.size:
            return True
        A = self.la @ x + self.la0
        D = self.ld @ x + self.ld0
        return bool(np.all(D > 0) and np.all(A + self.ls * D > 0))

    # barrier ----------------------------------------------------------------
    def value(self, x: np.ndarray, t: float) -> float:
        p = self.prog
        if not self._log_domain(x):
            return np.inf
        s = p.h - p.G @ x
        if np.any(s <= 0):
            return np.inf
        total = -np.sum(np.log(s))
        if self.mod_pairs is not None:
            ms = self.b2 - x[p.mod_re] ** 2 - x[p.mod_im] ** 2
            if np.any(ms <= 0):
                return np.inf
            total -= np.sum(np.log(ms))
        for qc in p.quads:
            xi = x[qc.idx]
            f = xi @ qc.Q @ xi + qc.q @ xi + qc.r
            if f >= 0:
                return np.inf
            total -= np.log(-f)
        for lmi in p.lmis:
            X = lmi.F0 + np.tensordot(x[lmi.idx], lmi.F, axes=1)
            try:
                C = np.linalg.cholesky(X)
            except np.linalg.LinAlgError:
                return np.inf
            total -= 2 * np.sum(np.log(np.diag(C)))
        return -t * self.objective(x) + total

    def grad_hess(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        p = self.prog
        n = self.n
        g = -t * p.c.copy()
        H = np.zeros((n, n))
        if self.lw.size:
            A = self.la @ x + self.la0
            D = self.ld @ x + self.ld0
            U = A + self.ls * D
            fA = self.lw * D / U
            fD = self.lw * (np.log(U / D) + self.ls * D / U - 1)
            g -= t * (fA @ self.la + fD @ self.ld)
            R = D[:, None] * self.la - A[:, None] * self.ld
            coef = t * self.lw / (D * U**2)
            H += (R.T * coef) @ R
        s = p.h - p.G @ x
        if s.size:
            inv = 1.0 / s
            g += p.G.T @ inv
            H += (p.G.T * inv**2) @ p.G
        if self.mod_pairs is not None:
            a, b = p.mod_re, p.mod_im
            ms = self.b2 - x[a] ** 2 - x[b] ** 2
            ga, gb = 2 * x[a] / ms, 2 * x[b] / ms
            np.add.at(g, a, ga)
            np.add.at(g, b, gb)
            diag = 2 / ms
            np.add.at(H, (a, a), ga * ga + diag)
            np.add.at(H, (b, b), gb * gb + diag)
            np.add.at(H, (a, b), ga * gb)
            np.add.at(H, (b, a), ga * gb)
        for qc in p.quads:
            xi = x[qc.idx]
            f = xi @ qc.Q @ xi + qc.q @ xi + qc.r
            df = 2 * qc.Q @ xi + qc.q
            g[qc.idx] += df / (-f)
            H[np.ix_(qc.idx, qc.idx)] += np.outer(df, df) / f**2 + 2 * qc.Q / (-f)
        for lmi in p.lmis:
            X = lmi.F0 + np.tensordot(x[lmi.idx], lmi.F, axes=1)
            Xi = np.linalg.inv(X)
            Y = np.einsum("ab,mbc->mac", Xi, lmi.F)
            g[lmi.idx] -= np.einsum("maa->m", Y)
            H[np.ix_(lmi.idx, lmi.idx)] += np.einsum("mab,nba->mn", Y, Y)
        return g, H

    def is_strictly_feasible(self, x: np.ndarray) -> bool:
        return np.isfinite(self.value(x, 0.0))


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    # symmetric diagonal equilibration keeps the tiny ridge from swamping
    # weakly curved directions when the barrier Hessian is badly scaled
    d = np.sqrt(np.maximum(np.abs(np.diag(H)), np.finfo(float).tiny))
    Hs = H / d[:, None] / d[None, :]
    try:
        cf = scipy.linalg.cho_factor(Hs + 1e-14 * np.eye(H.shape[0]), check_finite=False)
        return -scipy.linalg.cho_solve(cf, g / d, check_finite=False) / d
    except (np.linalg.LinAlgError, ValueError):
        return -np.linalg.lstsq(H, g, rcond=None)[0]


def _center(bar: _Barrier, x: np.ndarray, t: float, budget: int, Z: np.ndarray | None, tol: float = 1e-10):
    steps = 0
    lam2 = np.inf
    while steps < budget:
        g, H = bar.grad_hess(x, t)
        if Z is None:
            dx = _newton_direction(H, g)
        else:
            dx = Z @ _newton_direction(Z.T @ H @ Z, Z.T @ g)
        lam2 = float(-g @ dx)
        if not np.isfinite(lam2):
            break
        if lam2 <= 2 * tol:
            break
        f0 = bar.value(x, t)
        slope = float(g @ dx)
        slack = 8 * np.finfo(float).eps * abs(f0)
        step = 1.0
        while step > 1e-14:
            xn = x + step * dx
            fn = bar.value(xn, t)
            if fn <= f0 + 0.01 * step * slope + slack:
                break
            step *= 0.5
        else:
            break
        x = xn
        steps += 1
        if step * np.max(np.abs(dx)) <= 1e-15 * max(1.0, np.max(np.abs(x))):
            break
    return x, max(lam2, 0.0), steps


def _initial_t(bar: _Barrier, x: np.ndarray, m: int, Z: np.ndarray | None) -> float:
    g_obj = -bar.prog.c.copy()
    if bar.lw.size:
        A = bar.la @ x + bar.la0
        D = bar.ld @ x + bar.ld0
        U = A + bar.ls * D
        g_obj -= (bar.lw * D / U) @ bar.la + (bar.lw * (np.log(U / D) + bar.ls * D / U - 1)) @ bar.ld
    g_bar, H = bar.grad_hess(x, 0.0)
    if Z is not None:
        g_obj, g_bar, H = Z.T @ g_obj, Z.T @ g_bar, Z.T @ H @ Z
    try:
        Hi_g0 = np.linalg.solve(H + 1e-12 * np.eye(H.shape[0]), g_obj)
    except np.linalg.LinAlgError:
        return 1.0
    den = float(g_obj @ Hi_g0)
    if den <= 0:
        return 1.0
    t = -float(g_bar @ Hi_g0) / den
    return float(np.clip(t, 1e-2, 1e3)) if np.isfinite(t) and t > 0 else 1.0


def _nullspace(prog: ConicProgram) -> np.ndarray | None:
    if prog.A_eq.shape[0] == 0:
        return None
    return scipy.linalg.null_space(prog.A_eq)


def _barrier_solve(prog: ConicProgram, x: np.ndarray, eps: float, max_iter: int, mu: float = 20.0):
    bar = _Barrier(prog)
    Z = _nullspace(prog)
    m = max(prog.barrier_degree, 1)
    t = _initial_t(bar, x, m, Z)
    total = 0
    while True:
        x, lam2, k = _center(bar, x, t, max_iter - total, Z)
        total += k
        gap = m / t
        if gap <= eps:
            return x, gap, gap + lam2 / t, total, True
        if total >= max_iter:
            return x, gap, gap + lam2 / t, total, False
        t *= mu


def _max_violation_all(prog: ConicProgram, x: np.ndarray) -> float:
    vals = [np.max(v) for v in prog.constraint_values(x).values() if v.size]
    return max(vals) if vals else -1.0


def _phase_one(prog: ConicProgram, x: np.ndarray, max_iter: int) -> tuple[np.ndarray, float]:
    """Minimize the largest constraint value; returns (x, s*)."""
    n = prog.n
    s0 = max(_max_violation_all(prog, x), 0.0) + 1.0
    G = np.hstack([prog.G, -np.ones((prog.G.shape[0], 1))])
    G = np.vstack([G, np.eye(1, n + 1, n) * -1.0])
    h = np.concatenate([prog.h, [1.0]])
    quads = [
        QuadConstraint(np.append(qc.idx, n), _pad(qc.Q), np.append(qc.q, -1.0), qc.r, qc.name)
        for qc in prog.quads
    ]
    for a, b, bd in zip(prog.mod_re, prog.mod_im, prog.mod_bound):
        quads.append(QuadConstraint(np.array([a, b, n]), np.diag([1.0, 1.0, 0.0]), np.array([0.0, 0.0, -1.0]), -bd**2))
    lmis = [
        LMI(np.append(l.idx, n), l.F0, np.concatenate([l.F, np.eye(l.F0.shape[0])[None]]), l.name)
        for l in prog.lmis
    ]
    c = np.zeros(n + 1)
    c[n] = -1.0
    A_eq = np.hstack([prog.A_eq, np.zeros((prog.A_eq.shape[0], 1))])
    aux = ConicProgram(n=n + 1, c=c, G=G, h=h, A_eq=A_eq, b_eq=prog.b_eq, quads=quads, lmis=lmis)
    xa, *_ = _barrier_solve(aux, np.append(x, s0), 1e-10, max_iter)
    return xa[:n], float(xa[n])


def _pad(Q: np.ndarray) -> np.ndarray:
    out = np.zeros((Q.shape[0] + 1, Q.shape[1] + 1))
    out[:-1, :-1] = Q
    return out


def solve(prog: ConicProgram, eps: float = 1e-8, max_iter: int = 200, x0: np.ndarray | None = None) -> ConicSolution:
    """Maximize the program; see :class:`ConicSolution` for the certificate.

    ``stationarity`` bounds the suboptimality of the returned point: the
    duality gap ``m / t`` of the final barrier parameter plus the remaining
    Newton decrement. ``max_iter`` caps the number of Newton steps (phase I
    has its own budget of the same size).
    """
    x = prog.x0 if x0 is None else x0
    x = np.zeros(prog.n) if x is None else np.asarray(x, dtype=float).copy()
    if prog.A_eq.shape[0]:
        x = x - np.linalg.lstsq(prog.A_eq, prog.A_eq @ x - prog.b_eq, rcond=None)[0]
    bar = _Barrier(prog)
    if not bar.is_strictly_feasible(x):
        x, s_star = _phase_one(prog, x, max_iter)
        if not (s_star < -1e-10 and bar.is_strictly_feasible(x)):
            return ConicSolution(
                x=x,
                objective=prog.objective(x) if bar._log_domain(x) else -np.inf,
                status=Status.INFEASIBLE,
                primal_residual=max(s_star, 0.0),
                stationarity=np.inf,
                gap=np.inf,
                iterations=0,
            )
    x, gap, stat, iters, done = _barrier_solve(prog, x, eps, max_iter)
    primal = prog.max_violation(x)
    status = Status.OPTIMAL if done and stat <= eps and primal <= eps else Status.MAX_ITER
    return ConicSolution(
        x=x,
        objective=prog.objective(x),
        status=status,
        primal_residual=primal,
        stationarity=stat,
        gap=gap,
        iterations=iters,
    )
