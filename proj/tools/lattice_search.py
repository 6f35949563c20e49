#!/usr/bin/env python3
"""Search an extensible rank-1 lattice generating vector in base 2.

Randomized component-by-component construction with product weights
gamma_j = 1 / j**2. The figure of merit for a candidate component is the
sum over m in [M_MIN, M_MAX] of log P_2 for the embedded lattice with
2**m points, so every power-of-two prefix of the radical-inverse ordered
sequence is a good lattice on its own.

Output is the C++ table consumed by include/boxprob/detail/lattice_vector.hpp.
"""
import argparse

import numpy as np

M_MIN, M_MAX = 6, 18


def bernoulli2(x):
    return x * x - x + 1.0 / 6.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", type=int, default=128)
    ap.add_argument("--candidates", type=int, default=48)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n = 1 << M_MAX
    k = np.arange(n, dtype=np.uint64)
    prod = np.ones(n)
    z_all = [1]
    prod *= 1.0 + 2.0 * np.pi**2 * bernoulli2(k.astype(np.float64) / n)
    for j in range(2, args.dims + 1):
        gamma = 1.0 / (j * j)
        cands = rng.integers(0, 1 << 31, size=args.candidates, dtype=np.uint64) * 2 + 1
        best, best_score = None, np.inf
        for z in cands:
            x = ((k * np.uint64(z)) & np.uint64(n - 1)).astype(np.float64) / n
            term = prod * (1.0 + gamma * 2.0 * np.pi**2 * bernoulli2(x))
            score = 0.0
            for m in range(M_MIN, M_MAX + 1):
                sub = term[:: 1 << (M_MAX - m)]
                score += np.log(max(sub.mean() - 1.0, 1e-300))
            if score < best_score:
                best, best_score = int(z), score
        x = ((k * np.uint64(best)) & np.uint64(n - 1)).astype(np.float64) / n
        prod *= 1.0 + gamma * 2.0 * np.pi**2 * bernoulli2(x)
        z_all.append(best & 0xFFFFFFFF)
    rows = [", ".join(f"{z}u" for z in z_all[i : i + 6]) for i in range(0, len(z_all), 6)]
    print(",\n".join("    " + r for r in rows))


if __name__ == "__main__":
    main()
