"""MOS summaries with normal-approximation CIs, pairwise one-way ANOVA and
Spearman rank correlation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

Z95 = 1.96
SIGNIFICANCE = 0.05

SCOPES = ("clip", "condition", "model-overall")

_BETA_EPS = 1e-16
_BETA_TINY = 1e-300
_BETA_MAX_ITER = 10_000


@dataclass(frozen=True)
class MosSummary:
    scope: str
    mos: float
    n_ratings: int
    ci95: float
    dmos: Optional[float] = None
    label: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MosSummary":
        return cls(**d)


def mos_summary(scores: Iterable[float], scope: str = "model-overall",
                label: Optional[str] = None) -> MosSummary:
    """Mean score and its 95 % CI, ``1.96 * s / sqrt(n)`` with ``s`` the sample std.

    A single rating has no spread estimate; its CI is reported as 0.
    """
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}; expected one of {SCOPES}")
    x = [float(s) for s in scores]
    n = len(x)
    if n == 0:
        raise ValueError(f"empty scope {label or scope!r}: no ratings")
    mean = math.fsum(x) / n
    if n > 1:
        var = math.fsum((v - mean) ** 2 for v in x) / (n - 1)
        ci = Z95 * math.sqrt(var) / math.sqrt(n)
    else:
        ci = 0.0
    return MosSummary(scope=scope, mos=mean, n_ratings=n, ci95=ci, label=label)


def dmos(model_summary: MosSummary, noisy_summary: MosSummary) -> float:
    """MOS gain over the unprocessed noisy set, rounded to 12 decimals."""
    if model_summary.scope != noisy_summary.scope:
        raise ValueError(f"scope mismatch: {model_summary.scope} vs {noisy_summary.scope}")
    # rounding strips binary noise so 3.52 - 2.85 reads back as 0.67
    return round(model_summary.mos - noisy_summary.mos, 12)


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` by Lentz's continued fraction."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # the fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def _beta_cf(a, b, x):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _BETA_TINY else _BETA_TINY)
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _BETA_TINY else _BETA_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _BETA_TINY else _BETA_TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _BETA_TINY else _BETA_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _BETA_TINY else _BETA_TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail ``P(F > f)`` of the F distribution."""
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_regularized(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p: float


def anova_oneway(*groups: Sequence[float]) -> AnovaResult:
    """One-way ANOVA across ``groups``.

    Zero within-group variance yields p = 1 when all means agree and p = 0 otherwise.
    """
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2 or any(a.size == 0 for a in arrays):
        raise ValueError("need at least two non-empty groups")
    n_total = sum(a.size for a in arrays)
    df_b = len(arrays) - 1
    df_w = n_total - len(arrays)
    if df_w <= 0:
        raise ValueError("not enough observations for a within-group variance")
    grand = math.fsum(math.fsum(a) for a in arrays) / n_total
    means = [math.fsum(a) / a.size for a in arrays]
    ss_b = math.fsum(a.size * (m - grand) ** 2 for a, m in zip(arrays, means))
    ss_w = math.fsum(math.fsum((a - m) ** 2) for a, m in zip(arrays, means))
    if ss_w == 0.0:
        same = all(math.isclose(m, means[0], rel_tol=0.0, abs_tol=1e-12) for m in means)
        return AnovaResult(0.0 if same else math.inf, df_b, df_w, 1.0 if same else 0.0)
    f = (ss_b / df_b) / (ss_w / df_w)
    return AnovaResult(f, df_b, df_w, f_sf(f, df_b, df_w))


@dataclass
class PValueMatrix:
    models: list
    p: np.ndarray
    threshold: float = SIGNIFICANCE

    def __post_init__(self):
        self.models = list(self.models)
        self.p = np.asarray(self.p, dtype=np.float64)
        n = len(self.models)
        if self.p.shape != (n, n):
            raise ValueError(f"p matrix shape {self.p.shape} does not match {n} models")
        if not np.allclose(self.p, self.p.T, atol=1e-12):
            raise ValueError("p matrix must be symmetric")
        if np.any((self.p < 0) | (self.p > 1)):
            raise ValueError("p values must lie in [0, 1]")

    def index(self, model) -> int:
        return self.models.index(model)

    def pvalue(self, a, b) -> float:
        return float(self.p[self.index(a), self.index(b)])

    def significant(self, a, b) -> bool:
        return self.pvalue(a, b) < self.threshold

    def label(self, a, b) -> str:
        return "Statistically Significant" if self.significant(a, b) else \
            "Not Statistically Significant"

    def to_dict(self) -> dict:
        return {"models": self.models, "p": self.p.tolist(), "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d) -> "PValueMatrix":
        return cls(d["models"], np.asarray(d["p"]), d.get("threshold", SIGNIFICANCE))

    def table(self, decimals: int = 2) -> str:
        """Lower-triangular text table with a significance legend."""
        names = [str(m) for m in self.models]
        w = max(8, max(len(n) for n in names) + 2)
        lines = [" " * w + "".join(n.rjust(w) for n in names)]
        for i, n in enumerate(names):
            cells = "".join(f"{self.p[i, j]:.{decimals}f}".rjust(w) for j in range(i + 1))
            lines.append(n.ljust(w) + cells)
        lines.append("")
        lines.append(f">= {self.threshold:g}  Not Statistically Significant")
        lines.append(f"<  {self.threshold:g}  Statistically Significant")
        return "\n".join(lines)


def anova_pairwise(per_clip_scores_by_model: Mapping[str, object],
                   threshold: float = SIGNIFICANCE) -> PValueMatrix:
    """Two-group ANOVA p-value for every model pair on per-clip mean scores.

    Values may be sequences (all of equal length, aligned by clip) or
    ``clip_id -> score`` mappings over the same clip set.
    """
    models = list(per_clip_scores_by_model)
    vectors = {}
    first_keys = None
    for m in models:
        v = per_clip_scores_by_model[m]
        if isinstance(v, Mapping):
            keys = sorted(v)
            if first_keys is None:
                first_keys = keys
            elif keys != first_keys:
                raise ValueError(f"model {m!r} is scored on a different clip set")
            v = [v[k] for k in keys]
        vectors[m] = np.asarray(v, dtype=np.float64)
    lengths = {v.size for v in vectors.values()}
    if len(lengths) > 1:
        raise ValueError("models are scored on different numbers of clips")
    n = len(models)
    p = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            p[i, j] = p[j, i] = anova_oneway(vectors[models[i]], vectors[models[j]]).p
    return PValueMatrix(models, p, threshold)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    if len(x) != len(y):
        raise ValueError("x and y must have equal length")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    rx, ry = average_ranks(x), average_ranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = float(np.dot(dx, dx)), float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("Spearman correlation is undefined for a constant vector")
    return float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
