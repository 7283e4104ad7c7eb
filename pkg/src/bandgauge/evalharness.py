"""Evaluation machinery: correlations, logistic score alignment,
classification curves, threshold search, significance testing, and the
content-diversity statistics.

Monotonicity metrics (rank and pairwise-order correlation) are computed on
raw scores; consistency metrics (linear correlation, RMS error) are computed
after aligning predictions to the subjective scale with a five-parameter
logistic curve

    f(x) = b1 * (1/2 - 1 / (1 + exp(b2 * (x - b3)))) + b4 * x + b5

fitted by derivative-free simplex search with seeded restarts.  The family
nests every affine map, so the exact linear least-squares solution is always
kept as a candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgcore import PlanarImage, to_luma
from .statdist import f_quantile


def _paired(x, y, minimum=4):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired score vectors must be 1-D and equally long")
    if x.size < minimum:
        raise ValueError(f"need at least {minimum} pairs")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("scores must be finite")
    return x, y


def _rankdata(v: np.ndarray) -> np.ndarray:
    """Average ranks, 1-based, ties averaged."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x, y) -> float:
    x, y = _paired(x, y, minimum=2)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float((xc * xc).sum()) * float((yc * yc).sum()))
    if denom == 0.0:
        raise ValueError("correlation undefined for a constant vector")
    return float((xc * yc).sum()) / denom


def srcc(predicted, subjective) -> float:
    """Rank correlation with averaged ties."""
    x, y = _paired(predicted, subjective, minimum=3)
    return pearson(_rankdata(x), _rankdata(y))


def krcc(predicted, subjective) -> float:
    """Pairwise-order correlation, tie-corrected (tau-b)."""
    x, y = _paired(predicted, subjective, minimum=3)
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(x.size, k=1)
    prod = sx[iu] * sy[iu]
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    n0 = x.size * (x.size - 1) // 2
    ties_x = n0 - int((sx[iu] != 0).sum())
    ties_y = n0 - int((sy[iu] != 0).sum())
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0.0:
        raise ValueError("correlation undefined for a constant vector")
    return (concordant - discordant) / denom


@dataclass(frozen=True)
class Logistic5Params:
    b1: float
    b2: float
    b3: float
    b4: float
    b5: float
    rmse: float
    converged: bool = True

    def as_array(self):
        return np.array([self.b1, self.b2, self.b3, self.b4, self.b5])


def logistic5(beta, x):
    """Evaluate the mapping curve; beta is array-like of 5 coefficients."""
    b1, b2, b3, b4, b5 = np.asarray(beta, dtype=np.float64)
    z = np.clip(b2 * (np.asarray(x, dtype=np.float64) - b3), -500.0, 500.0)
    return b1 * (0.5 - 1.0 / (1.0 + np.exp(z))) + b4 * np.asarray(x) + b5


def _linear_lsq(x, y):
    """Exact affine fit expressed inside the 5-parameter family (b1 = 0)."""
    a = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    return np.array([0.0, 1.0, float(np.mean(x)), float(coef[0]), float(coef[1])])


def _nelder_mead(fn, x0, max_iters=4000, ftol=1e-13):
    """Plain simplex descent; returns (x_best, f_best)."""
    n = len(x0)
    scale = np.where(np.abs(x0) > 1e-8, 0.1 * np.abs(x0), 0.1)
    simplex = [np.asarray(x0, dtype=np.float64)]
    for i in range(n):
        v = simplex[0].copy()
        v[i] += scale[i]
        simplex.append(v)
    fvals = [fn(v) for v in simplex]
    for _ in range(max_iters):
        idx = np.argsort(fvals)
        simplex = [simplex[i] for i in idx]
        fvals = [fvals[i] for i in idx]
        if abs(fvals[-1] - fvals[0]) <= ftol * (abs(fvals[0]) + ftol):
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        refl = centroid + (centroid - worst)
        f_refl = fn(refl)
        if f_refl < fvals[0]:
            expand = centroid + 2.0 * (centroid - worst)
            f_exp = fn(expand)
            if f_exp < f_refl:
                simplex[-1], fvals[-1] = expand, f_exp
            else:
                simplex[-1], fvals[-1] = refl, f_refl
        elif f_refl < fvals[-2]:
            simplex[-1], fvals[-1] = refl, f_refl
        else:
            contract = centroid + 0.5 * (worst - centroid)
            f_con = fn(contract)
            if f_con < fvals[-1]:
                simplex[-1], fvals[-1] = contract, f_con
            else:
                best = simplex[0]
                simplex = [best] + [best + 0.5 * (v - best) for v in simplex[1:]]
                fvals = [fvals[0]] + [fn(v) for v in simplex[1:]]
    i_best = int(np.argmin(fvals))
    return simplex[i_best], fvals[i_best]


def fit_logistic5(predicted, subjective, restarts: int = 3, seed: int = 0) -> Logistic5Params:
    """Least-squares fit of the alignment curve with seeded multi-start."""
    x, y = _paired(predicted, subjective, minimum=6)

    def sse(beta):
        r = logistic5(beta, x) - y
        return float((r * r).sum())

    x_std = float(x.std())
    init = np.array(
        [
            float(y.max() - y.min()),
            1.0 / x_std if x_std > 0 else 1.0,
            float(x.mean()),
            0.0,
            float(y.mean()),
        ]
    )
    linear = _linear_lsq(x, y)
    linear_sse = sse(linear)
    rng = np.random.default_rng(seed)
    starts = [init, linear] + [
        init * rng.uniform(0.5, 1.5, size=5) + rng.normal(0.0, 0.1, size=5)
        for _ in range(max(restarts - 2, 0))
    ]
    results = []
    for start in starts:
        best, f_best = _nelder_mead(sse, start)
        best, f_best = min(
            [(best, f_best), _nelder_mead(sse, best)], key=lambda c: c[1]
        )  # polish pass
        if np.isfinite(f_best):
            results.append((best, f_best))
    if results:
        converged = True
        # The exact affine solution stays in the pool: the family nests it.
        beta, f_min = min(results + [(linear, linear_sse)], key=lambda c: c[1])
    else:
        converged = False
        beta, f_min = linear, linear_sse
    rmse = math.sqrt(f_min / x.size)
    return Logistic5Params(*(float(b) for b in beta), rmse=rmse, converged=converged)


def plcc_rmse(predicted, subjective) -> tuple:
    """Linear correlation and RMS error after logistic alignment."""
    x, y = _paired(predicted, subjective, minimum=6)
    fit = fit_logistic5(x, y)
    mapped = logistic5(fit.as_array(), x)
    if float(np.std(mapped)) == 0.0:
        # Degenerate mapping (constant predictions): correlation undefined.
        raise ValueError("mapped predictions are constant")
    plcc = pearson(mapped, y)
    rmse = float(np.sqrt(np.mean((mapped - y) ** 2)))
    return plcc, rmse


@dataclass(frozen=True)
class RocPrResult:
    auroc: float
    auprc: float
    roc_points: tuple  # (fpr, tpr) steps
    pr_points: tuple  # (recall, precision) steps


def _binary_set(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels)
    if s.shape != lab.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    lab = lab.astype(np.int32)
    if set(np.unique(lab).tolist()) - {0, 1}:
        raise ValueError("labels must be 0/1")
    if lab.min() == lab.max():
        raise ValueError("both classes must be present")
    return s, lab


def roc_pr(scores, labels) -> RocPrResult:
    """Threshold-free classification quality.

    The ROC area uses the rank statistic with tie correction; the PR area
    accumulates precision step-wise over distinct score thresholds
    (descending), handling tied scores as one block.
    """
    s, lab = _binary_set(scores, labels)
    n_pos = int(lab.sum())
    n_neg = lab.size - n_pos

    ranks = _rankdata(s)
    rank_sum = float(ranks[lab == 1].sum())
    auroc = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="stable")
    s_ord = s[order]
    lab_ord = lab[order]
    tp = fp = 0
    roc_points = [(0.0, 0.0)]
    pr_points = []
    auprc = 0.0
    prev_recall = 0.0
    i = 0
    while i < s_ord.size:
        j = i
        while j + 1 < s_ord.size and s_ord[j + 1] == s_ord[i]:
            j += 1
        tp += int(lab_ord[i : j + 1].sum())
        fp += (j - i + 1) - int(lab_ord[i : j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        roc_points.append((fp / n_neg, recall))
        pr_points.append((recall, precision))
        auprc += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return RocPrResult(float(auroc), float(auprc), tuple(roc_points), tuple(pr_points))


def _accuracy_at(s, lab, threshold) -> float:
    pred = s >= threshold
    return float(np.mean(pred == (lab == 1)))


def threshold_search(scores, labels) -> tuple:
    """(threshold, accuracy) maximizing accuracy of `score >= threshold`.

    A half-interval (bisection) pass gives the fast path; because accuracy
    is not unimodal the result is checked against exhaustive search over
    candidate midpoints and the exhaustive optimum wins when better.
    """
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.int32)
    if s.ndim != 1 or s.shape != lab.shape:
        raise ValueError("scores and labels must be 1-D and equally long")
    uniq = np.unique(s)
    lo = float(uniq[0]) - 1.0
    hi = float(uniq[-1]) + 1.0

    # Fast path: half-interval search on the threshold axis.
    best_t, best_acc = lo, _accuracy_at(s, lab, lo)
    a, b = lo, hi
    for _ in range(64):
        mid = 0.5 * (a + b)
        acc_mid = _accuracy_at(s, lab, mid)
        if acc_mid > best_acc:
            best_acc, best_t = acc_mid, mid
        left = 0.5 * (a + mid)
        right = 0.5 * (mid + b)
        if _accuracy_at(s, lab, left) >= _accuracy_at(s, lab, right):
            b = mid
        else:
            a = mid
        if b - a <= 1e-12 * max(1.0, abs(hi)):
            break

    # Exhaustive verification over all decision boundaries.
    candidates = [lo, hi]
    candidates.extend(0.5 * (uniq[1:] + uniq[:-1]))
    candidates.extend(uniq)
    for t in candidates:
        acc = _accuracy_at(s, lab, float(t))
        if acc > best_acc or (acc == best_acc and float(t) < best_t):
            best_acc, best_t = acc, float(t)
    return best_t, best_acc


@dataclass(frozen=True)
class FTestResult:
    f_stat: float
    critical: float
    significant: bool  # first residual set significantly better


def ftest_significance(residuals_a, residuals_b, confidence: float = 0.95) -> FTestResult:
    """Left-tailed variance-ratio test: is model a significantly better?"""
    a = np.asarray(residuals_a, dtype=np.float64)
    b = np.asarray(residuals_b, dtype=np.float64)
    if a.size < 4 or b.size < 4:
        raise ValueError("need at least 4 residuals per model")
    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))
    if var_b == 0.0:
        raise ValueError("reference residuals have zero variance")
    f_stat = var_a / var_b
    critical = f_quantile(1.0 - confidence, a.size - 1, b.size - 1)
    return FTestResult(f_stat, critical, f_stat < critical)


def diversity_metrics(img: PlanarImage) -> tuple:
    """(contrast, colorfulness, brightness) of an RGB image.

    Contrast: std of gray-scale intensity. Colorfulness: opponent-channel
    statistic from (R-G, (R+G)/2 - B). Brightness: mean intensity over the
    three channels.
    """
    if img.channels != 3:
        raise ValueError("diversity metrics need an RGB image")
    r, g, b = (p.astype(np.float64) for p in img.planes)
    if img.is_float:
        r, g, b = r * 255.0, g * 255.0, b * 255.0
    gray = to_luma(img).planes[0].astype(np.float64) * 255.0
    contrast = float(gray.std())
    rg = r - g
    yb = 0.5 * (r + g) - b
    colorfulness = float(
        math.hypot(rg.mean(), yb.mean()) + math.hypot(rg.std(), yb.std())
    )
    brightness = float((r.mean() + g.mean() + b.mean()) / 3.0)
    return contrast, colorfulness, brightness
