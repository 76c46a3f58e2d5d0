"""Exact solutions of tiny QPs by enumerating active sets.

Each candidate fixes some variables at a bound and turns some ``>=`` rows into
equalities; the remaining equality-constrained KKT system is solved densely
and accepted if it is primal feasible, dual feasible and sign-consistent.
Candidates are tried in order of increasing active-set size. Cost grows as
``3^n 2^m``, so this is for n, m in the single digits.
"""

from __future__ import annotations

import itertools

import numpy as np

from .instance import PrimalDualPoint, QpInstance

FREE, AT_LOWER, AT_UPPER = 0, 1, 2


class OracleFailure(RuntimeError):
    pass


def _candidates(inst: QpInstance):
    var_opts = []
    for i in range(inst.n):
        opts = [FREE]
        if inst.mask_l[i]:
            opts.append(AT_LOWER)
        if inst.mask_u[i] and not (inst.mask_l[i] and inst.l[i] == inst.u[i]):
            opts.append(AT_UPPER)
        if inst.mask_l[i] and inst.mask_u[i] and inst.l[i] == inst.u[i]:
            opts = [AT_LOWER]
        var_opts.append(opts)
    row_opts = [[False, True] if inst.mask_ineq[j] else [True] for j in range(inst.m)]
    combos = itertools.product(itertools.product(*var_opts), itertools.product(*row_opts))
    return sorted(combos, key=lambda vr: sum(s != FREE for s in vr[0])
                  + sum(a and inst.mask_ineq[j] > 0 for j, a in enumerate(vr[1])))


def solve_active_set(inst: QpInstance, tol: float = 1e-9, max_candidates: int = 2_000_000) -> PrimalDualPoint:
    """Return the KKT point of a strongly convex tiny QP.

    ``tol`` is a relative feasibility slack used only to accept a candidate;
    the returned point solves its KKT system to machine precision.
    """
    n, m = inst.n, inst.m
    Q = inst.Q.to_dense()
    A = inst.A.to_dense()
    c, b = inst.c, inst.b
    scale = 1.0 + max(np.abs(c).max(initial=0), np.abs(b).max(initial=0),
                      np.abs(Q).max(initial=0), np.abs(A).max(initial=0))
    slack = tol * scale
    cands = _candidates(inst)
    if len(cands) > max_candidates:
        raise OracleFailure(f"{len(cands)} active sets exceed the limit {max_candidates}")

    for states, actives in cands:
        states = np.array(states, dtype=np.int64)
        actives = np.array(actives, dtype=bool)
        F = np.flatnonzero(states == FREE)
        B = np.flatnonzero(states != FREE)
        S = np.flatnonzero(actives)
        xB = np.where(states[B] == AT_LOWER, inst.l[B], inst.u[B]) if len(B) else np.zeros(0)

        nf, ns = len(F), len(S)
        K = np.zeros((nf + ns, nf + ns))
        K[:nf, :nf] = Q[np.ix_(F, F)]
        K[:nf, nf:] = -A[np.ix_(S, F)].T
        K[nf:, :nf] = A[np.ix_(S, F)]
        rhs = np.concatenate([-c[F] - Q[np.ix_(F, B)] @ xB, b[S] - A[np.ix_(S, B)] @ xB])
        if nf + ns:
            try:
                z = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                z = None
            # dependent active rows: any consistent multiplier vector will do
            if z is None or not np.all(np.isfinite(z)) or not _solves(K, z, rhs):
                z = np.linalg.lstsq(K, rhs, rcond=None)[0]
                if not _solves(K, z, rhs):
                    continue
        else:
            z = np.zeros(0)

        x = np.empty(n)
        x[F] = z[:nf]
        x[B] = xB
        y = np.zeros(m)
        y[S] = z[nf:]

        if np.any(x[F] < inst.l[F] - slack) or np.any(x[F] > inst.u[F] + slack):
            continue
        Ax = A @ x
        inactive = ~actives
        if np.any(Ax[inactive] < b[inactive] - slack):
            continue
        if np.any(y[S][inst.mask_ineq[S] > 0] < -slack):
            continue
        zeta = Q @ x + c - A.T @ y
        if np.any(zeta[states == AT_LOWER] < -slack) or np.any(zeta[states == AT_UPPER] > slack):
            continue
        # snap tiny sign noise so the returned point sits exactly in the cones
        x = np.clip(x, inst.l, inst.u)
        y = np.where((inst.mask_ineq > 0) & (y < 0), 0.0, y)
        return PrimalDualPoint(x, y)
    raise OracleFailure("no active set satisfies the KKT conditions (infeasible or not strongly convex?)")


def _solves(K, z, rhs) -> bool:
    return bool(np.linalg.norm(K @ z - rhs) <= 1e-10 * (1.0 + np.linalg.norm(rhs)))
