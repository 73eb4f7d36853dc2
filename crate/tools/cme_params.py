"""Generate node/weight tables for concentrated matrix-exponential (CME) inversion.

For each order n (number of transform evaluations) the kernel is

    h(x) = c * exp(-x) * |sum_{j=0}^{N} a_j exp(i j omega x)|^2,   N = n - 1,

a nonnegative matrix-exponential density.  For fixed (omega, lam) the vector a
minimising E[(X - lam)^2] / E[X^0] is the lowest generalised eigenvector of
(M2 - 2 lam M1 + lam^2 M0, M0); (omega, lam) are then tuned by Nelder-Mead to
minimise the squared coefficient of variation.

Inversion rule (mean-one rescaling, mu1 = E[X]):

    f(T) ~ (1/T) Re sum_k eta_k F(beta_k / T),  beta_k = mu1 (1 + i k omega).

Usage: python3 tools/cme_params.py --cache /tmp/cme.jsonl > crates/core/data/cme_params.json
"""
import argparse
import json
import os
import math
import sys

import mpmath as mp
import numpy as np
import scipy.linalg as sl
from scipy.optimize import minimize


def moment_matrices(n_terms, omega):
    j = np.arange(n_terms + 1)
    diff = j[:, None] - j[None, :]
    z = 1 - 1j * diff * omega
    return [(math.factorial(r) / z ** (r + 1)).real for r in range(3)]


def kernel(n_terms, omega, lam):
    m0, m1, m2 = moment_matrices(n_terms, omega)
    _, vecs = sl.eigh(m2 - 2 * lam * m1 + lam ** 2 * m0, m0)
    a = vecs[:, 0]
    mom = [a @ m @ a for m in (m0, m1, m2)]
    return a, mom


mp.mp.dps = 40

# weights beyond this magnify transform round-off past usefulness
MAX_WEIGHT_SUM = 1e6


def exact_moments(a, omega):
    """Moments of exp(-x)|q|^2 in extended precision for the given a."""
    n_terms = len(a) - 1
    d = [mp.fsum(mp.mpf(a[j + k]) * mp.mpf(a[j]) for j in range(n_terms + 1 - k))
         for k in range(n_terms + 1)]
    w = mp.mpf(omega)
    mom = []
    for r in range(3):
        acc = d[0] * mp.factorial(r)
        for k in range(1, n_terms + 1):
            acc += 2 * d[k] * mp.re(mp.factorial(r) / mp.mpc(1, -k * w) ** (r + 1))
        mom.append(acc)
    return d, mom


def scv(params, n_terms):
    omega, lam = params
    if omega <= 0 or lam <= 0:
        return 1e9
    try:
        a, _ = kernel(n_terms, omega, lam)
    except (np.linalg.LinAlgError, ValueError):
        return 1e9
    d, (q0, q1, q2) = exact_moments(a, omega)
    if q0 <= 0 or q1 <= 0:
        return 1e9
    mu1 = q1 / q0
    weight_sum = mu1 / q0 * (abs(d[0]) + 2 * mp.fsum(abs(x) for x in d[1:]))
    if weight_sum > MAX_WEIGHT_SUM:
        return 1e9
    v = float(q2 * q0 / q1 ** 2 - 1)
    return v if v > 0 else 1e9


def optimise(n_terms, start):
    best = (scv(start, n_terms), start)
    for omega in np.linspace(0.05, 1.2, 12):
        for lam in np.geomspace(0.5, 50, 12):
            v = scv((omega, lam), n_terms)
            if v < best[0]:
                best = (v, (omega, lam))
    res = minimize(scv, best[1], args=(n_terms,), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000})
    return res.x if res.fun < best[0] else np.array(best[1])


def table(n_terms, omega, lam):
    a, _ = kernel(n_terms, omega, lam)
    # autocorrelation gives the cosine coefficients of |q|^2
    d, (q0, q1, _) = exact_moments(a, omega)
    mu1 = q1 / q0
    eta = [mu1 / q0 * d[0]] + [2 * mu1 / q0 * x for x in d[1:]]
    return float(mu1), [float(e) for e in eta]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cache", help="jsonl file of finished kernels, reused on restart")
    args = ap.parse_args()
    done = {}
    if args.cache and os.path.exists(args.cache):
        with open(args.cache) as f:
            for line in f:
                if line.strip():
                    k = json.loads(line)
                    done[k["n"]] = k
    out = []
    start = (0.7, 4.0)
    for n in range(2, 101):
        if n in done:
            k = done[n]
            start = (k["omega"], k["lam"])
            out.append(k)
            continue
        n_terms = n - 1
        omega, lam = optimise(n_terms, start)
        start = (omega, lam)
        mu1, eta = table(n_terms, omega, lam)
        out.append({
            "n": n,
            "omega": float(omega),
            "lam": float(lam),
            "mu1": float(mu1),
            "cv2": float(scv((omega, lam), n_terms)),
            "eta": eta,
        })
        print(n, out[-1]["cv2"], file=sys.stderr)
        if args.cache:
            with open(args.cache, "a") as f:
                f.write(json.dumps(out[-1]) + "\n")
    json.dump({"version": 1, "kernels": out}, sys.stdout, indent=0)


if __name__ == "__main__":
    main()
