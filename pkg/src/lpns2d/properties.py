"""Quick randomized property checks, runnable without the test suite."""

from __future__ import annotations

import numpy as np

from .littlewood_paley import bony_terms, build_partition, dyadic_block
from .spectral import Grid, l2_norm_spectral, leray_project, lp_norm, product, to_physical, to_spectral


def _random_field(grid: Grid, rng: np.random.Generator, comps: int = 1):
    samples = rng.standard_normal((comps, *grid.shape)) if comps > 1 else rng.standard_normal(grid.shape)
    return to_spectral(samples, grid)


def run_properties(seed: int = 0, cases: int = 20, n: int = 64) -> list[tuple[str, bool, str]]:
    """Each entry is (name, passed, worst observed value)."""
    rng = np.random.default_rng(seed)
    grid = Grid(n)
    part = build_partition(grid)
    results = []

    res = part.residual()
    results.append(("partition of unity", res < 1e-12, f"residual {res:.2e}"))

    worst = 0.0
    for _ in range(cases):
        f = _random_field(grid, rng)
        back = to_spectral(to_physical(f).real, grid)
        worst = max(worst, l2_norm_spectral(back - f) / l2_norm_spectral(f))
    results.append(("transform round trip", worst < 1e-12, f"max relative error {worst:.2e}"))

    worst = 0.0
    for _ in range(cases):
        f = _random_field(grid, rng)
        worst = max(worst, abs(lp_norm(f, 2) - l2_norm_spectral(f)) / lp_norm(f, 2))
    results.append(("Parseval", worst < 1e-12, f"max relative gap {worst:.2e}"))

    worst = 0.0
    for _ in range(cases):
        u = _random_field(grid, rng, 2)
        pu = leray_project(u)
        worst = max(worst, l2_norm_spectral(leray_project(pu) - pu) / l2_norm_spectral(u))
    results.append(("Leray idempotence", worst < 1e-12, f"max defect {worst:.2e}"))

    worst = 0.0
    shells = part.shells
    for _ in range(max(1, cases // 4)):
        f = _random_field(grid, rng)
        norm = l2_norm_spectral(f)
        for j in shells:
            for k in shells:
                if abs(j - k) >= 2:
                    worst = max(worst, l2_norm_spectral(dyadic_block(dyadic_block(f, j, part), k, part)) / norm)
    results.append(("almost orthogonality", worst < 1e-12, f"max overlap {worst:.2e}"))

    worst = 0.0
    for _ in range(cases):
        u, v = _random_field(grid, rng), _random_field(grid, rng)
        t1, t2, r = bony_terms(u, v, part)
        uv = product(u, v)
        worst = max(worst, l2_norm_spectral(uv - (t1 + t2 + r)) / l2_norm_spectral(uv))
    results.append(("Bony reconstruction", worst < 1e-10, f"max relative defect {worst:.2e}"))
    return results
