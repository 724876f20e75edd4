"""Deterministic dense convex QP solver.

Solves

    min 1/2 x^T H x + g^T x
    s.t.  A_eq x + b_eq = 0,   A_in x + b_in >= 0

with a dual active-set method (Goldfarb/Idnani family): start from the
equality-constrained minimizer and add violated inequalities one at a
time, taking dual steps that keep multipliers non-negative.  Matrices are
re-factorized at every step; problem sizes here are small and dense, and
re-factorization keeps the implementation simple and deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

_EQ_TOL = 1e-9
_IN_TOL = 1e-9


@dataclass
class QPProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        d = self.g.shape[0]
        if self.H.shape != (d, d):
            raise ValueError("H/g dimension mismatch")
        if np.max(np.abs(self.H - self.H.T)) > 1e-10:
            raise ValueError("H must be symmetric")
        if self.A_eq is None:
            self.A_eq = np.zeros((0, d))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, d)
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if self.A_in is None:
            self.A_in = np.zeros((0, d))
            self.b_in = np.zeros(0)
        else:
            self.A_in = np.asarray(self.A_in, dtype=float).reshape(-1, d)
            self.b_in = np.asarray(self.b_in, dtype=float).reshape(-1)
        if self.A_eq.shape[0] != self.b_eq.shape[0] or self.A_in.shape[0] != self.b_in.shape[0]:
            raise ValueError("constraint dimension mismatch")

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def regularized_hessian(self) -> np.ndarray:
        d = self.dim
        reg = 1e-9 * np.trace(self.H) / max(d, 1)
        return self.H + reg * np.eye(d)

    def dump(self) -> str:
        """Row-major text dump for offline reproduction."""
        lines = [f"qp d={self.dim} e={self.A_eq.shape[0]} i={self.A_in.shape[0]}"]
        for name, mat in (
            ("H", self.H),
            ("g", self.g),
            ("A_eq", self.A_eq),
            ("b_eq", self.b_eq),
            ("A_in", self.A_in),
            ("b_in", self.b_in),
        ):
            lines.append(name + " " + " ".join(repr(v) for v in np.asarray(mat).ravel()))
        return "\n".join(lines) + "\n"


@dataclass
class QPSolution:
    x: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray  # full-length, zero on inactive rows
    status: str
    iterations: int
    solve_time: float
    active_set: list = field(default_factory=list)


class QPSolver:
    """Reusable solver; one instance per thread."""

    def __init__(self, max_iterations: int = 200):
        self.max_iterations = max_iterations

    def solve(self, p: QPProblem) -> QPSolution:
        t0 = time.perf_counter()
        H = p.regularized_hessian()
        d = p.dim
        e = p.A_eq.shape[0]
        ni = p.A_in.shape[0]

        def polish(x, nu, mu_active, active):
            """Re-solve the final working set directly; on near-degenerate
            active sets also try minimal-norm duals and dropping one
            constraint, keeping the candidate that best satisfies KKT."""

            def score(x_, nu_, mu_, act):
                mu_ = np.asarray(mu_, dtype=float)
                grad = p.H @ x_ + p.g - p.A_eq.T @ nu_ - p.A_in[act].T @ mu_
                s = p.A_in[act] @ x_ + p.b_in[act] if act else np.zeros(0)
                comp = np.max(np.abs(mu_ * s)) if act else 0.0
                return max(np.max(np.abs(grad), initial=0.0), comp)

            def working_candidate(work):
                # solve against the unregularized Hessian: the tiny ridge
                # used by the active-set loop shifts the stationarity
                # residual by reg*|x|, which matters for large solutions
                x2, nu2, mu2 = solve_working_set(work, Hmat=p.H)
                if not np.all(np.isfinite(x2)):
                    return None
                if ni and np.min(p.A_in @ x2 + p.b_in) < -_IN_TOL:
                    return None
                if e and np.max(np.abs(p.A_eq @ x2 + p.b_eq)) > 1e-8:
                    return None
                if np.any(np.asarray(mu2) < -1e-9):
                    return None
                return (x2, nu2, np.maximum(mu2, 0.0), list(work))

            def with_lstsq_duals(cand):
                x_, _, _, act = cand
                if not act and not e:
                    return None
                N = np.vstack([p.A_eq, p.A_in[act]])
                duals, *_ = np.linalg.lstsq(N.T, p.H @ x_ + p.g, rcond=None)
                if np.any(duals[e:] < -1e-9):
                    return None
                return (x_, duals[:e], np.maximum(duals[e:], 0.0), act)

            incoming = (x, nu, np.asarray(mu_active, dtype=float), list(active))
            if score(*incoming) <= 1e-9:
                return incoming
            candidates = [incoming]
            c = working_candidate(active)
            if c is not None:
                candidates.append(c)
            for c in list(candidates):
                c2 = with_lstsq_duals(c)
                if c2 is not None:
                    candidates.append(c2)
            best = min(candidates, key=lambda cc: score(*cc))
            if score(*best) > 1e-8 and active:
                for k in range(len(active)):
                    c = working_candidate(active[:k] + active[k + 1 :])
                    if c is not None:
                        candidates.append(c)
                        c2 = with_lstsq_duals(c)
                        if c2 is not None:
                            candidates.append(c2)
                best = min(candidates, key=lambda cc: score(*cc))
            return best

        def finish(x, nu, mu_active, active, status, iters):
            if status == OPTIMAL:
                x, nu, mu_active, active = polish(x, nu, mu_active, active)
            mu = np.zeros(ni)
            for k, idx in enumerate(active):
                mu[idx] = mu_active[k]
            return QPSolution(
                x=x,
                duals_eq=nu,
                duals_in=mu,
                status=status,
                iterations=iters,
                solve_time=time.perf_counter() - t0,
                active_set=list(active),
            )

        def solve_working_set(active, Hmat=None):
            """Minimize over the equality set plus the active inequalities."""
            N = np.vstack([p.A_eq, p.A_in[active]]) if active else p.A_eq
            b = np.concatenate([p.b_eq, p.b_in[active]]) if active else p.b_eq
            k = N.shape[0]
            KKT = np.zeros((d + k, d + k))
            KKT[:d, :d] = H if Hmat is None else Hmat
            KKT[:d, d:] = -N.T
            KKT[d:, :d] = N
            rhs = np.concatenate([-p.g, -b])
            try:
                sol = np.linalg.solve(KKT, rhs)
                # iterative refinement; the KKT system can be ill-conditioned
                for _ in range(2):
                    sol += np.linalg.solve(KKT, rhs - KKT @ sol)
            except np.linalg.LinAlgError:
                sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
            return sol[:d], sol[d : d + e], sol[d + e :]

        # warm start: try the active set implied by the provided point
        if p.warm_start is not None and p.warm_start.shape == (d,):
            s = p.A_in @ p.warm_start + p.b_in
            active = [int(i) for i in np.nonzero(s <= 1e-7)[0]]
            if len(active) + e <= d:
                x, nu, mu = solve_working_set(active)
                feas = (
                    np.all(p.A_in @ x + p.b_in >= -_IN_TOL)
                    and (e == 0 or np.max(np.abs(p.A_eq @ x + p.b_eq)) <= _EQ_TOL)
                )
                if feas and np.all(mu >= -1e-10):
                    return finish(x, nu, np.maximum(mu, 0.0), active, OPTIMAL, 1)

        # cold start: equality-constrained minimizer
        x, nu, _ = solve_working_set([])
        if e and np.max(np.abs(p.A_eq @ x + p.b_eq)) > 1e-6:
            return finish(x, nu, [], [], INFEASIBLE, 1)
        active: list[int] = []
        mu = np.zeros(0)
        Hinv = np.linalg.inv(H)
        iters = 0

        while True:
            iters += 1
            if iters > self.max_iterations:
                return finish(x, nu, mu, active, MAX_ITER, iters)
            s = p.A_in @ x + p.b_in
            viol = np.where(s < -_IN_TOL)[0]
            if viol.size == 0:
                return finish(x, nu, mu, active, OPTIMAL, iters)
            # most violated first; ties break on the lowest index
            pidx = int(viol[np.argmin(s[viol])])
            n_p = p.A_in[pidx]
            mu_p = 0.0

            while True:
                iters += 1
                if iters > self.max_iterations:
                    return finish(x, nu, mu, active, MAX_ITER, iters)
                N = np.vstack([p.A_eq, p.A_in[active]])
                Hin = Hinv @ n_p
                if N.shape[0]:
                    NHN = N @ Hinv @ N.T
                    try:
                        r = np.linalg.solve(NHN, N @ Hin)
                    except np.linalg.LinAlgError:
                        r, *_ = np.linalg.lstsq(NHN, N @ Hin, rcond=None)
                    z = Hin - Hinv @ (N.T @ r)
                else:
                    r = np.zeros(0)
                    z = Hin
                r_in = r[e:]  # dual step direction of active inequalities

                denom = float(n_p @ z)
                s_p = float(n_p @ x + p.b_in[pidx])
                # max step before an active inequality dual would go negative
                t1 = np.inf
                k1 = -1
                for k in range(len(active)):
                    if r_in[k] > 1e-12:
                        t = mu[k] / r_in[k]
                        if t < t1 - 1e-15:
                            t1, k1 = t, k
                # step that satisfies the violated constraint
                t2 = -s_p / denom if denom > 1e-14 else np.inf
                t = min(t1, t2)
                if not np.isfinite(t):
                    return finish(x, nu, mu, active, INFEASIBLE, iters)
                if denom > 1e-14:
                    x = x + t * z
                mu = mu - t * r_in
                nu = nu - t * r[:e] if e else nu
                mu_p += t
                if t == t2 and t2 <= t1:
                    active.append(pidx)
                    mu = np.append(mu, mu_p)
                    break
                # drop the blocking constraint and keep working on pidx
                del active[k1]
                mu = np.delete(mu, k1)


def solve_qp(p: QPProblem, max_iterations: int = 200) -> QPSolution:
    return QPSolver(max_iterations=max_iterations).solve(p)
