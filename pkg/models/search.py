import math
from typing import Callable

INV_PHI        = (math.sqrt(5) - 1) / 2   # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2   # 1 / phi^2


def golden_section_max(f: Callable[[float], float], lo: float, hi: float,
                       tol: float = 1e-9) -> tuple[float, float]:
    """
    Maximize a unimodal function on [lo, hi] by golden-section search.

    The bracket shrinks until its width is at most tol * (1 + hi - lo). Both
    endpoints are scored as well, so maxima sitting on the boundary (a cap of
    zero, a cap at the largest demand) are returned exactly.

    Returns:
        (x, f(x)) for the best point seen. Ties go to the smaller x.
    """
    lo, hi = min(lo, hi), max(lo, hi)
    width = hi - lo
    best = [(f(lo), lo)]
    if width > 0:
        best.append((f(hi), hi))

    target = tol * (1.0 + width)
    if width > target:
        n = int(math.ceil(math.log(target / width) / math.log(INV_PHI)))

        a, b = lo, hi
        h = width
        c = a + INV_PHI_SQUARE * h
        d = a + INV_PHI * h
        yc, yd = f(c), f(d)

        for _ in range(n - 1):
            if yc >= yd:
                b, d, yd = d, c, yc
                h *= INV_PHI
                c = a + INV_PHI_SQUARE * h
                yc = f(c)
            else:
                a, c, yc = c, d, yd
                h *= INV_PHI
                d = a + INV_PHI * h
                yd = f(d)

        best.extend([(yc, c), (yd, d)])

    value, x = max(best, key=lambda item: (item[0], -item[1]))
    return x, value
