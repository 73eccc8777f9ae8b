#!/usr/bin/python3
"""Activation Constants Oracle - recomputes the frozen envelope table.

Each supremum is located on a dense grid over the family's bracket and then
refined with a bounded scalar minimization around the best grid point. Run
it after touching the scalar maps:

    python src/constants_oracle.py
"""

import sys
from typing import Callable, Dict, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from activations import ENVELOPES, ActivationEnvelope, ActivationKind, scalar_maps


GRID_STEP = 1e-3
REFINE_XATOL = 1e-12
AGREEMENT_TOL = 1e-9


def locate_maximum(func: Callable, bracket: Tuple[float, float],
                   step: float = GRID_STEP) -> Tuple[float, float]:
    """Maximize a scalar function over ``bracket``.

    Returns:
        Tuple (argmax, max)
    """
    lo, hi = bracket
    grid = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    values = func(grid)
    idx = int(np.argmax(values))
    best_x, best_value = float(grid[idx]), float(values[idx])

    left = float(grid[max(idx - 1, 0)])
    right = float(grid[min(idx + 1, grid.size - 1)])
    result = minimize_scalar(lambda x: -float(func(np.float64(x))), bounds=(left, right),
                             method="bounded", options={"xatol": REFINE_XATOL})
    if result.success and -result.fun > best_value:
        best_x, best_value = float(result.x), float(-result.fun)
    return best_x, best_value


def recompute_envelope(kind: ActivationKind, step: float = GRID_STEP) -> ActivationEnvelope:
    """Recompute the elementwise envelope of ``kind`` numerically.

    Bounded families (slope 0) take the offset as sup |f|, which includes the
    limits at +-infinity. Linearly growing families take it as the depth of
    the negative lobe, -min f.
    """
    frozen = ENVELOPES[kind]
    f, d1, d2 = scalar_maps(kind)
    bracket = frozen.bracket

    if frozen.slope == 0.0:
        _, offset = locate_maximum(lambda x: np.abs(f(x)), bracket, step)
        tails = np.abs(f(np.array([-np.inf, np.inf])))
        offset = max(offset, float(np.max(tails)))
    else:
        _, neg_min = locate_maximum(lambda x: -f(x), bracket, step)
        offset = max(neg_min, 0.0)

    _, first_sup = locate_maximum(lambda x: np.abs(d1(x)), bracket, step)
    _, second_sup = locate_maximum(lambda x: np.abs(d2(x)), bracket, step)

    return ActivationEnvelope(
        slope=frozen.slope,
        offset=offset,
        first_sup=first_sup,
        second_sup=second_sup,
        bracket=bracket,
    )


def envelope_deviations(kind: ActivationKind, step: float = GRID_STEP) -> Dict[str, float]:
    """Absolute difference between the frozen and recomputed envelope fields."""
    frozen = ENVELOPES[kind]
    computed = recompute_envelope(kind, step)
    return {
        name: abs(getattr(frozen, name) - getattr(computed, name))
        for name in ("offset", "first_sup", "second_sup")
    }


def main() -> int:
    print("\n" + "=" * 60)
    print("Activation envelope oracle")
    print("=" * 60)
    print(f"{'kind':<10} {'field':<11} {'frozen':>20} {'recomputed':>20} {'deviation':>11}")

    all_ok = True
    for kind in ActivationKind:
        frozen = ENVELOPES[kind]
        computed = recompute_envelope(kind)
        for name in ("offset", "first_sup", "second_sup"):
            a, b = getattr(frozen, name), getattr(computed, name)
            deviation = abs(a - b)
            mark = "✓" if deviation <= AGREEMENT_TOL else "✗"
            all_ok = all_ok and deviation <= AGREEMENT_TOL
            print(f"{kind.value:<10} {name:<11} {a:>20.15f} {b:>20.15f} {deviation:>10.2e} {mark}")

    if all_ok:
        print("\n✓ Frozen table agrees with the oracle")
        return 0
    print("\n✗ Frozen table disagrees with the oracle")
    return 1


if __name__ == "__main__":
    sys.exit(main())
