"""Persistent solve worker spoken to over stdin/stdout, one JSON object per line.

Requests:
  {"op": "hello"}                       -> {"ok": true, "backends": [...]}
  {"op": "solve", "backend": "highs", ...problem..., "options": {...}}
  {"op": "quit"}

A problem is flat arrays: ncols, lb, ub, obj (costs), integrality (0/1),
row_ptr/col_idx/vals (CSR), row_lo, row_hi, and optionally cones as four
parallel column-index arrays {i, v, p, q} meaning x_i * x_v >= x_p^2 + x_q^2.
Bounds use +-1e30 as the infinity sentinel. The "highs" backend solves the
mixed-integer linear part (cones must be absent; the caller cuts them); the
"clarabel" backend solves continuous problems with the cones natively.
"""

import json
import sys

import numpy as np
import scipy.sparse as sp

INF = 1e30


def _to_inf(a):
    a = np.asarray(a, dtype=float)
    out = a.copy()
    out[a >= INF] = np.inf
    out[a <= -INF] = -np.inf
    return out


def _finite_list(a):
    a = np.asarray(a, dtype=float)
    a = np.nan_to_num(a, nan=0.0, posinf=INF, neginf=-INF)
    return a.tolist()


def _csr(req):
    m = len(req["row_lo"])
    n = int(req["ncols"])
    return sp.csr_matrix(
        (np.asarray(req["vals"], dtype=float),
         np.asarray(req["col_idx"], dtype=np.int64),
         np.asarray(req["row_ptr"], dtype=np.int64)),
        shape=(m, n),
    )


def solve_highs(req):
    from scipy.optimize import Bounds, LinearConstraint, milp

    if req.get("cones") and len(req["cones"].get("i", [])) > 0:
        return {"ok": False, "error": "highs backend does not accept cone rows"}
    n = int(req["ncols"])
    c = np.asarray(req["obj"], dtype=float)
    lb = _to_inf(req["lb"])
    ub = _to_inf(req["ub"])
    integrality = np.asarray(req["integrality"], dtype=np.int64)
    constraints = None
    if len(req["row_lo"]) > 0:
        constraints = LinearConstraint(_csr(req), _to_inf(req["row_lo"]), _to_inf(req["row_hi"]))
    opts = req.get("options", {})
    options = {"presolve": bool(opts.get("presolve", True))}
    if opts.get("mip_gap") is not None:
        options["mip_rel_gap"] = float(opts["mip_gap"])
    if opts.get("time_limit") and float(opts["time_limit"]) > 0:
        options["time_limit"] = float(opts["time_limit"])
    res = milp(c=c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lb, ub), options=options)

    status_map = {0: "optimal", 1: "time_limit", 2: "infeasible", 3: "unbounded", 4: "error"}
    status = status_map.get(res.status, "error")
    out = {"ok": True, "status": status, "message": str(res.message)}
    def clamp(v):
        v = float(v)
        if v != v:
            return 0.0
        return max(-INF, min(INF, v))

    if res.x is not None:
        out["x"] = _finite_list(res.x)
        out["obj"] = clamp(res.fun)
        bound = getattr(res, "mip_dual_bound", None)
        out["bound"] = clamp(bound) if bound is not None else clamp(res.fun)
    elif status == "time_limit":
        out["status"] = "time_limit"
    return out


def solve_clarabel(req):
    import clarabel

    n = int(req["ncols"])
    lb = _to_inf(req["lb"])
    ub = _to_inf(req["ub"])
    integrality = np.asarray(req["integrality"], dtype=np.int64)
    if np.any((integrality == 1) & (lb < ub)):
        return {"ok": False, "error": "clarabel backend cannot branch on free integer columns"}

    A = _csr(req) if len(req["row_lo"]) > 0 else sp.csr_matrix((0, n))
    row_lo = _to_inf(req["row_lo"])
    row_hi = _to_inf(req["row_hi"])

    blocks, rhs, cones = [], [], []
    eq = row_lo == row_hi
    if np.any(eq):
        blocks.append(A[eq])
        rhs.append(row_hi[eq])
        cones.append(clarabel.ZeroConeT(int(np.sum(eq))))

    ineq_blocks, ineq_rhs = [], []
    up = (~eq) & np.isfinite(row_hi)
    if np.any(up):
        ineq_blocks.append(A[up])
        ineq_rhs.append(row_hi[up])
    lo = (~eq) & np.isfinite(row_lo)
    if np.any(lo):
        ineq_blocks.append(-A[lo])
        ineq_rhs.append(-row_lo[lo])
    fin_ub = np.where(np.isfinite(ub))[0]
    if fin_ub.size:
        E = sp.csr_matrix((np.ones(fin_ub.size), (np.arange(fin_ub.size), fin_ub)), shape=(fin_ub.size, n))
        ineq_blocks.append(E)
        ineq_rhs.append(ub[fin_ub])
    fin_lb = np.where(np.isfinite(lb))[0]
    if fin_lb.size:
        E = sp.csr_matrix((-np.ones(fin_lb.size), (np.arange(fin_lb.size), fin_lb)), shape=(fin_lb.size, n))
        ineq_blocks.append(E)
        ineq_rhs.append(-lb[fin_lb])
    if ineq_blocks:
        stacked = sp.vstack(ineq_blocks, format="csr")
        blocks.append(stacked)
        ineq_rhs = np.concatenate(ineq_rhs)
        rhs.append(ineq_rhs)
        cones.append(clarabel.NonnegativeConeT(int(stacked.shape[0])))

    cone_req = req.get("cones") or {}
    ci = cone_req.get("i", [])
    if len(ci) > 0:
        cv, cp, cq = cone_req["v"], cone_req["p"], cone_req["q"]
        k = len(ci)
        # x_i x_v >= x_p^2 + x_q^2  <=>  ||(2 x_p, 2 x_q, x_i - x_v)|| <= x_i + x_v
        data, ri, cj = [], [], []
        for idx in range(k):
            base = 4 * idx
            ri += [base, base, base + 1, base + 2, base + 3, base + 3]
            cj += [ci[idx], cv[idx], cp[idx], cq[idx], ci[idx], cv[idx]]
            data += [-1.0, -1.0, -2.0, -2.0, -1.0, 1.0]
        S = sp.csr_matrix((data, (ri, cj)), shape=(4 * k, n))
        blocks.append(S)
        rhs.append(np.zeros(4 * k))
        cones += [clarabel.SecondOrderConeT(4)] * k

    A_full = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, n))
    b_full = np.concatenate(rhs) if rhs else np.zeros(0)
    P = sp.csc_matrix((n, n))
    q = np.asarray(req["obj"], dtype=float)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    opts = req.get("options", {})
    if opts.get("time_limit") and float(opts["time_limit"]) > 0:
        settings.time_limit = float(opts["time_limit"])
    if opts.get("cone_tol"):
        tol = min(1e-8, float(opts["cone_tol"]))
        settings.tol_feas = tol
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
    solver = clarabel.DefaultSolver(P, q, A_full, b_full, cones, settings)
    sol = solver.solve()

    status = str(sol.status)
    if status in ("Solved", "SolverStatus.Solved"):
        mapped = "optimal"
    elif "AlmostSolved" in status:
        mapped = "gap_reached"
    elif "PrimalInfeasible" in status:
        mapped = "infeasible"
    elif "DualInfeasible" in status:
        mapped = "unbounded"
    elif "MaxTime" in status:
        mapped = "time_limit"
    elif "MaxIterations" in status:
        mapped = "gap_reached"
    else:
        return {"ok": False, "error": f"clarabel status {status}"}
    out = {"ok": True, "status": mapped, "message": status}
    if mapped in ("optimal", "gap_reached", "time_limit"):
        x = np.asarray(sol.x, dtype=float)
        out["x"] = _finite_list(x)
        obj = float(np.dot(np.asarray(req["obj"], dtype=float), x))
        out["obj"] = obj
        out["bound"] = obj
    return out


def available_backends():
    found = []
    try:
        import scipy.optimize  # noqa: F401
        found.append("highs")
    except Exception:
        pass
    try:
        import clarabel  # noqa: F401
        found.append("clarabel")
    except Exception:
        pass
    return found


def dispatch(req):
    backend = req.get("backend", "highs")
    if backend == "highs":
        return solve_highs(req)
    if backend == "clarabel":
        return solve_clarabel(req)
    return {"ok": False, "error": f"unknown backend '{backend}'"}


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "hello":
                resp = {"ok": True, "backends": available_backends()}
            elif op == "quit":
                return
            elif op == "solve":
                resp = dispatch(req)
            else:
                resp = {"ok": False, "error": f"unknown op '{op}'"}
        except Exception as exc:  # report, never die mid-session
            resp = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        try:
            sys.stdout.write(json.dumps(resp) + "\n")
            sys.stdout.flush()
        except BrokenPipeError:
            return


if __name__ == "__main__":
    try:
        main()
    except (BrokenPipeError, KeyboardInterrupt):
        pass
