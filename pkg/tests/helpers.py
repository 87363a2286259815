"""Shared test utilities: independent oracles and panel builders."""

import numpy as np

from tradercompany.panels import ReturnPanel


def panel_from(rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    stamps = [f"t{k:06d}" for k in range(rows.shape[1])]
    return ReturnPanel(
        symbols=[f"s{i}" for i in range(rows.shape[0])], timestamps=stamps, returns=rows
    )


def brute_force_metrics(returns, t_y):
    """Recompute every performance metric straight from its definition.

    Pure-Python loops, independent of the library implementation.
    """
    r = [float(x) for x in returns]
    n = len(r)
    mean = sum(r) / n
    ar = t_y * mean
    risk = (t_y * sum((x - mean) ** 2 for x in r) / (n - 1)) ** 0.5
    sr = ar / risk if risk > 0 else None
    c = []
    acc = 0.0
    for x in r:
        acc += x
        c.append(acc)
    mdd = 0.0
    for t in range(n):
        peak = max(c[: t + 1])
        mdd = max(mdd, peak - c[t])
    cr = ar / abs(mdd) if mdd != 0 else None
    return ar, risk, sr, mdd, cr
