"""Independent reference implementations used as test oracles.

Everything here is deliberately written as plain loops over pixels so it
shares no code path with the vectorized package implementations.
"""

import math

import numpy as np


def naive_conv3x3(x, w, b):
    """Same-padded 3x3 convolution on one (H, W, C) image, nested loops."""
    h, wd, cin = x.shape
    cout = w.shape[-1]
    out = np.zeros((h, wd, cout))
    for r in range(h):
        for c in range(wd):
            for o in range(cout):
                acc = b[o]
                for i in range(3):
                    for j in range(3):
                        rr, cc = r + i - 1, c + j - 1
                        if 0 <= rr < h and 0 <= cc < wd:
                            for k in range(cin):
                                acc += x[rr, cc, k] * w[i, j, k, o]
                out[r, c, o] = acc
    return out


def naive_forward(params, x):
    a = np.maximum(naive_conv3x3(x, params["w1"], params["b1"]), 0)
    a = np.maximum(naive_conv3x3(a, params["w2"], params["b2"]), 0)
    return naive_conv3x3(a, params["w3"], params["b3"])


def brute_force_metrics(pred, gt, t, thresholds):
    """Per-pixel loop over the intersection mask; returns a dict of all metrics."""
    n = 0
    s_abs = s_sq = s_rel = s_iabs = s_isq = s_tabs = s_tsq = 0.0
    hits = [0] * len(thresholds)
    for p, g in zip(np.ravel(pred), np.ravel(gt)):
        p, g = float(p), float(g)
        if p == 0 or g == 0:
            continue
        n += 1
        e = p - g
        s_abs += abs(e)
        s_sq += e * e
        s_rel += abs(e) / g
        ie = 1000.0 / p - 1000.0 / g
        s_iabs += abs(ie)
        s_isq += ie * ie
        s_tabs += min(abs(e), t)
        s_tsq += min(e * e, t * t)
        ratio = max(p / g, g / p)
        for i, th in enumerate(thresholds):
            if ratio < th:
                hits[i] += 1
    return {
        "rmse": math.sqrt(s_sq / n),
        "mae": s_abs / n,
        "mre": s_rel / n,
        "imae": s_iabs / n,
        "irmse": math.sqrt(s_isq / n),
        "tmae": s_tabs / n,
        "trmse": math.sqrt(s_tsq / n),
        "delta": [h / n for h in hits],
        "n_pixels": n,
    }


def central_difference(f, x, h):
    """Gradient of scalar ``f`` at array ``x`` by central differences (all entries)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


GOLDEN_SEED = 20240611


def golden_case():
    """Inputs for the stored forward-pass golden file: a 6x5 image, 4 -> 3 channels, hidden 5."""
    rng = np.random.default_rng(GOLDEN_SEED)
    x = rng.normal(size=(6, 5, 4))
    params = {}
    for i, (ci, co) in enumerate([(4, 5), (5, 5), (5, 3)], 1):
        params[f"w{i}"] = rng.normal(0, 0.5, (3, 3, ci, co))
        params[f"b{i}"] = rng.normal(0, 0.1, co)
    return x, params


if __name__ == "__main__":
    # regenerates tests/data/golden_forward.bin; run once, then commit the file
    import sys
    from pathlib import Path

    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from depthcoeff.depthio import write_tensors

    x, params = golden_case()
    out = naive_forward(params, x)
    write_tensors(Path(__file__).parent / "data" / "golden_forward.bin", [out])
