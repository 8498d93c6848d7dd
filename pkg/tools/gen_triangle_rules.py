"""Generate fully symmetric, positive-weight triangle quadrature rules.

Solves the moment equations for a prescribed orbit structure with
Levenberg-Marquardt from random starts and writes the result to
``src/divfree_dg/data/triangle_rules.json``. Run once; the package only
reads the JSON.

    python tools/gen_triangle_rules.py [--degrees 9 10]
    python tools/gen_triangle_rules.py --product --degrees 12

The shipped degree-12 rule comes from ``--product``: the orbit search did
not converge for that degree. Each degree is written to the JSON as soon as it is found. Solutions are
polished by Newton steps in 40-digit arithmetic before rounding to double.
"""
import argparse
import json
import math
import pathlib

import numpy as np
import mpmath as mp
from scipy.optimize import least_squares
from scipy.special import roots_jacobi, roots_legendre

# degree -> (centroid?, number of S21 orbits, number of S111 orbits)
ORBITS = {
    1: (1, 0, 0),
    2: (0, 1, 0),
    3: (0, 2, 0),
    4: (0, 2, 0),
    5: (1, 2, 0),
    6: (0, 2, 1),
    7: (0, 3, 1),
    8: (1, 3, 1),
    9: (1, 4, 2),
    10: (1, 3, 3),
    11: (1, 4, 4),
    12: (1, 5, 5),
}


def expand(params, structure):
    c, n21, n111 = structure
    bary, wts = [], []
    k = 0
    if c:
        bary.append((1 / 3, 1 / 3, 1 / 3))
        wts.append(params[k])
        k += 1
    for _ in range(n21):
        a, w = params[k], params[k + 1]
        k += 2
        b = 1 - 2 * a
        for p in [(a, a, b), (a, b, a), (b, a, a)]:
            bary.append(p)
            wts.append(w / 3)
    for _ in range(n111):
        a, b, w = params[k], params[k + 1], params[k + 2]
        k += 3
        c3 = 1 - a - b
        for p in [(a, b, c3), (b, a, c3), (a, c3, b), (c3, a, b), (b, c3, a), (c3, b, a)]:
            bary.append(p)
            wts.append(w / 6)
    bary = np.array(bary)
    return bary[:, 1:], np.array(wts)


def moments(degree):
    out = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            out.append((i, j, 2 * math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)))
    return out


def residual(params, structure, mom):
    pts, w = expand(params, structure)
    i, j, v = mom
    return (pts[:, 0][None, :] ** i[:, None] * pts[:, 1][None, :] ** j[:, None]) @ w - v


def random_start(structure, rng):
    c, n21, n111 = structure
    x, lo, hi = [], [], []
    if c:
        x.append(rng.uniform(0.05, 0.3)); lo.append(0.0); hi.append(1.0)
    for _ in range(n21):
        x += [rng.uniform(0.01, 0.49), rng.uniform(0.05, 0.4)]
        lo += [0.0, 0.0]; hi += [0.5, 1.0]
    for _ in range(n111):
        a = rng.uniform(0.01, 0.6)
        b = rng.uniform(0.01, 0.98 - a)
        x += [a, b, rng.uniform(0.05, 0.4)]
        lo += [0.0, 0.0, 0.0]; hi += [1.0, 1.0, 1.0]
    return np.array(x), (np.array(lo), np.array(hi))


def valid(params, structure):
    pts, w = expand(params, structure)
    lam = np.column_stack([1 - pts.sum(axis=1), pts])
    return w.min() > 0 and lam.min() > 1e-8


def warm_start(prev, structure, rng, share=0.05):
    """Pad a lower-degree rule with the missing orbits, given a small weight share."""
    (pc, p21, p111), pp = prev
    _, n21, n111 = structure
    old = pp.copy()
    weight = np.zeros(len(pp), bool)
    weight[:pc] = True
    weight[pc + 1:pc + 2 * p21:2] = True
    weight[pc + 2 * p21 + 2::3] = True
    old[weight] *= 1 - share
    fresh, _ = random_start((0, n21 - p21, n111 - p111), rng)
    k21 = 2 * (n21 - p21)
    fresh[1:k21:2] *= share
    fresh[k21 + 2::3] *= share
    split = pc + 2 * p21
    return np.concatenate([old[:split], fresh[:k21], old[split:], fresh[k21:]])


def solve(degree, seed=0, tries=20000, prev=None):
    """Random-start search; ``prev`` (structure, params) of a lower degree seeds warm starts."""
    structure = ORBITS[degree]
    mom = tuple(np.array(col) for col in zip(*moments(degree)))
    rng = np.random.default_rng(seed)
    for t in range(tries):
        if prev is not None and prev[0][0] == structure[0] and t % 2 == 0:
            x0 = warm_start(prev, structure, rng)
        else:
            x0, _ = random_start(structure, rng)
        sol = least_squares(residual, x0, args=(structure, mom), method="lm",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        if np.abs(sol.fun).max() < 2e-15 and valid(sol.x, structure):
            return expand(sol.x, structure)
        # LM often stalls near 1e-8 on underdetermined systems; Newton in extended precision finishes
        if np.abs(sol.fun).max() < 1e-6 and valid(sol.x, structure):
            x = polish(sol.x, structure, degree)
            if np.abs(residual(x, structure, mom)).max() < 2e-15 and valid(x, structure):
                return expand(x, structure)
    raise RuntimeError(f"no rule found for degree {degree}")


def orbit_params(pts, w, tol=1e-9):
    """Recover ``(structure, params)`` from an expanded symmetric rule."""
    lam = np.column_stack([1 - pts.sum(axis=1), pts])
    centre, s21, s111, seen = 0, [], [], set()
    for k, (l, wk) in enumerate(zip(lam, w)):
        key = tuple(np.round(np.sort(l), 9))
        if key in seen:
            continue
        seen.add(key)
        l = np.sort(l)
        if np.ptp(l) < tol:
            centre = wk
        elif abs(l[0] - l[1]) < tol or abs(l[1] - l[2]) < tol:
            a = l[0] if abs(l[0] - l[1]) < tol else l[2]
            s21 += [a, 3 * wk]
        else:
            s111 += [l[0], l[1], 6 * wk]
    structure = (int(centre != 0), len(s21) // 2, len(s111) // 3)
    params = ([centre] if centre else []) + s21 + s111
    return structure, np.array(params)


def polish(params, structure, degree, digits=40, steps=8):
    """Minimum-norm Newton iterations on the moment equations in extended precision."""
    mp.mp.dps = digits
    mom = [(i, j, mp.mpf(2) * mp.factorial(i) * mp.factorial(j) / mp.factorial(i + j + 2))
           for i, j, _ in moments(degree)]

    def res(x):
        c, n21, n111 = structure
        bary, wts, k = [], [], 0
        if c:
            bary.append((mp.mpf(1) / 3, mp.mpf(1) / 3))
            wts.append(x[k])
            k += 1
        for _ in range(n21):
            a, wt = x[k], x[k + 1]
            k += 2
            b = 1 - 2 * a
            bary += [(a, b), (b, a), (a, a)]
            wts += [wt / 3] * 3
        for _ in range(n111):
            a, b, wt = x[k], x[k + 1], x[k + 2]
            k += 3
            c3 = 1 - a - b
            bary += [(b, c3), (a, c3), (c3, b), (a, b), (c3, a), (b, a)]
            wts += [wt / 6] * 6
        return mp.matrix([sum(wt * px ** i * py ** j for (px, py), wt in zip(bary, wts)) - v
                          for i, j, v in mom])

    x = mp.matrix([mp.mpf(float(v)) for v in params])
    h = mp.mpf(10) ** (-digits // 2)
    for _ in range(steps):
        r = res(x)
        J = mp.matrix(len(r), len(x))
        for q in range(len(x)):
            e = mp.matrix(len(x), 1)
            e[q] = h
            col = (res(x + e) - res(x - e)) / (2 * h)
            for p in range(len(r)):
                J[p, q] = col[p]
        U, S, V = mp.svd_r(J)
        cut = S[0] * mp.mpf(10) ** (-digits // 2)
        dx = mp.matrix(len(x), 1)
        for k in range(len(S)):
            if S[k] > cut:
                coef = sum(U[p, k] * r[p] for p in range(len(r))) / S[k]
                for q in range(len(x)):
                    dx[q] -= coef * V[k, q]
        x = x + dx
        if mp.norm(r) < mp.mpf(10) ** (-digits + 5):
            break
    return np.array([float(v) for v in x])


def symmetrized_product(degree):
    """Collapsed Gauss-Jacobi product rule averaged over the six triangle symmetries.

    Exact to ``2 n - 1 >= degree`` with ``n = degree // 2 + 1`` points per
    direction; always exists, but has ``6 n^2`` points.
    """
    n = degree // 2 + 1
    u, wu = roots_legendre(n)
    v, wv = roots_jacobi(n, 1.0, 0.0)
    u, wu = 0.5 * (u + 1), 0.5 * wu
    v, wv = 0.5 * (v + 1), 0.25 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    lam = np.column_stack([(U * (1 - V)).ravel(), V.ravel()])
    lam = np.column_stack([1 - lam.sum(axis=1), lam])
    w = np.outer(wu, wv).ravel()
    perms = [(0, 1, 2), (1, 0, 2), (0, 2, 1), (2, 0, 1), (1, 2, 0), (2, 1, 0)]
    pts = np.concatenate([lam[:, p][:, 1:] for p in perms])
    wts = np.tile(w, 6) / (6 * w.sum())
    return pts, wts


OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "divfree_dg" / "data" / "triangle_rules.json"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--degrees", type=int, nargs="*", default=sorted(ORBITS))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=pathlib.Path, default=OUT)
    parser.add_argument("--product", action="store_true",
                        help="write symmetrized product rules instead of searching for orbit rules")
    parser.add_argument("--polish-existing", action="store_true",
                        help="only re-polish the rules already in the output file")
    args = parser.parse_args(argv)
    for d in args.degrees:
        if args.product:
            pts, w = symmetrized_product(d)
            mom = tuple(np.array(col) for col in zip(*moments(d)))
            err = np.abs((pts[:, 0][None, :] ** mom[0][:, None] * pts[:, 1][None, :] ** mom[1][:, None]) @ w
                         - mom[2]).max()
            _store(args.out, d, pts, w)
            print(d, len(w), f"max moment residual {err:.1e}", flush=True)
            continue
        if args.polish_existing:
            rule = json.loads(args.out.read_text())[str(d)]
            pts, w = np.array(rule["points"]), np.array(rule["weights"])
        else:
            rules = json.loads(args.out.read_text()) if args.out.exists() else {}
            prev = rules.get(str(d - 1))
            if prev is not None:
                prev = orbit_params(np.array(prev["points"]), np.array(prev["weights"]))
            pts, w = solve(d, seed=args.seed, prev=prev)
        structure, params = orbit_params(pts, w)
        pts, w = expand(polish(params, structure, d), structure)
        err = np.abs(residual(orbit_params(pts, w)[1], structure,
                              tuple(np.array(col) for col in zip(*moments(d))))).max()
        _store(args.out, d, pts, w)
        print(d, len(w), f"max moment residual {err:.1e}", flush=True)


def _store(out, degree, pts, w):
    # re-read so parallel runs on different degrees do not clobber each other
    rules = json.loads(out.read_text()) if out.exists() else {}
    rules[str(degree)] = {"points": pts.tolist(), "weights": w.tolist()}
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(dict(sorted(rules.items(), key=lambda kv: int(kv[0]))), indent=1))


if __name__ == "__main__":
    main()
