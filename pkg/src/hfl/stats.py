"""Hedonic statistics engine: design matrices, OLS with inference, diagnostics.

The linear solve goes through a QR decomposition; standard errors, t
statistics and two-sided p-values come from the unbiased error-variance
estimate and a continued-fraction incomplete-beta t-distribution CDF, so
there is no dependency beyond numpy.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ColumnMismatch,
    ConstantColumn,
    EmptyInput,
    NonPositiveBase,
    NonPositiveTarget,
    SingularDesign,
    UnknownVariable,
)

RSS_FLOOR = 1e-300  # keeps the Gaussian AIC finite on perfect fits

# the area covariate enters as log(area): rent is modeled log-linearly, so
# this keeps log(rpms) = log(rent) - log(area) linear in the design as well
CONTINUOUS_VARS = ("log_area", "rooms", "floor", "top_floor", "city_distance", "year_built")


# ---------------------------------------------------------------------------
# special functions (t-distribution CDF via regularized incomplete beta)

def _betacf(a, b, x):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def betainc_reg(a, b, x):
    """Regularized incomplete beta I_x(a, b), |error| well below 1e-12."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t, df):
    """Survival function P(T > t) of Student's t with df degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    p_two = t_two_sided_p(t, df)
    if t >= 0:
        return 0.5 * p_two
    return 1.0 - 0.5 * p_two


def t_two_sided_p(t, df):
    t2 = t * t
    if t2 < 1e-4 * df:
        # the complement parametrization stays accurate for tiny |t|,
        # where df / (df + t^2) would lose its distance from 1; the
        # complement's value is far from 1 there, so no cancellation
        return 1.0 - betainc_reg(0.5, df / 2.0, t2 / (df + t2))
    return betainc_reg(df / 2.0, 0.5, df / (df + t2))


# ---------------------------------------------------------------------------
# frames and fits

@dataclass
class FeatureFrame:
    names: list
    values: np.ndarray  # (n, p)
    kinds: list  # "continuous" | "dummy" per column
    standardization: dict = field(default_factory=dict)  # name -> (mean, std) of the raw column

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def column(self, name):
        try:
            j = self.names.index(name)
        except ValueError:
            raise UnknownVariable(f"no column named {name!r}") from None
        return self.values[:, j]

    def raw_column(self, name):
        """Undo z-standardization for one column."""
        v = self.column(name)
        if name in self.standardization:
            mean, std = self.standardization[name]
            return v * std + mean
        return v

    def with_column(self, name, raw_values, kind="continuous", standardize=True, prepend=False):
        """Return a new frame with one extra column (z-standardized by default)."""
        if name in self.names:
            raise ValueError(f"column {name!r} already present")
        raw = np.asarray(raw_values, dtype=np.float64)
        std_rec = dict(self.standardization)
        if standardize:
            col, rec = zstandardize(raw)
            std_rec[name] = rec
        else:
            col = raw
        if prepend:
            names = [name] + list(self.names)
            values = np.column_stack([col, self.values])
            kinds = [kind] + list(self.kinds)
        else:
            names = list(self.names) + [name]
            values = np.column_stack([self.values, col])
            kinds = list(self.kinds) + [kind]
        return FeatureFrame(names, values, kinds, std_rec)

    def select_rows(self, idx):
        return FeatureFrame(list(self.names), self.values[idx], list(self.kinds),
                            dict(self.standardization))


@dataclass
class TargetVector:
    values: np.ndarray
    transform: str  # "raw" | "log"
    label: str  # "rent" | "rpms"


@dataclass
class RegressionFit:
    names: list           # column names, without the intercept
    coef: np.ndarray      # per-column coefficients
    intercept: float
    se: np.ndarray        # standard errors, intercept first
    tstat: np.ndarray
    pvalue: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    r2: float
    adj_r2: float
    aic: float
    n: int
    p: int
    target_label: str = ""
    standardization: dict = field(default_factory=dict)

    def coef_table(self):
        rows = [{"name": "intercept", "estimate": float(self.intercept),
                 "se": float(self.se[0]), "t": float(self.tstat[0]),
                 "p": float(self.pvalue[0])}]
        for j, name in enumerate(self.names):
            rows.append({"name": name, "estimate": float(self.coef[j]),
                         "se": float(self.se[j + 1]), "t": float(self.tstat[j + 1]),
                         "p": float(self.pvalue[j + 1])})
        return rows

    def to_dict(self):
        return {
            "coefficients": self.coef_table(),
            "diagnostics": {"r2": self.r2, "adj_r2": self.adj_r2, "aic": self.aic,
                            "n": self.n, "p": self.p},
            "target_label": self.target_label,
            "standardization": {k: [float(v[0]), float(v[1])]
                                for k, v in self.standardization.items()},
        }


def zstandardize(values):
    """Z-score a column; returns (standardized, (mean, std))."""
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=0))
    if std == 0.0:
        raise ConstantColumn("cannot z-standardize a constant column")
    return (values - mean) / std, (mean, std)


@dataclass
class VariableSpec:
    target: str = "rpms"  # "rent" | "rpms"
    continuous: tuple = CONTINUOUS_VARS
    include_districts: bool = True
    include_controls: bool = True


def build_frame(listings, spec=None):
    """Assemble the hedonic design from listing records.

    The target is log-transformed; continuous, district-dummy and control
    columns are all z-standardized. One district is dropped as the
    reference level.
    """
    spec = spec or VariableSpec()
    if spec.target not in ("rent", "rpms"):
        raise UnknownVariable(f"unknown target {spec.target!r}")
    n = len(listings)
    names, cols, kinds = [], [], []
    for var in spec.continuous:
        if var == "log_area":
            col = np.array([math.log(float(rec.area)) for rec in listings])
        elif hasattr(listings[0], var):
            col = np.array([float(getattr(rec, var)) for rec in listings])
        else:
            raise UnknownVariable(f"listing has no field {var!r}")
        names.append(var)
        cols.append(col)
        kinds.append("continuous")
    if spec.include_districts:
        districts = np.array([rec.district for rec in listings])
        present = sorted(set(districts.tolist()))
        for d in present[1:]:  # first district is the reference level
            names.append(f"district_{d:02d}")
            cols.append((districts == d).astype(np.float64))
            kinds.append("dummy")
    if spec.include_controls and len(listings[0].controls) > 0:
        ctrl = np.array([rec.controls for rec in listings], dtype=np.float64)
        for j in range(ctrl.shape[1]):
            names.append(f"ctrl_{j:02d}")
            cols.append(ctrl[:, j])
            kinds.append("dummy")

    std_rec = {}
    std_cols = []
    for name, col in zip(names, cols):
        z, rec = zstandardize(col)
        std_rec[name] = rec
        std_cols.append(z)
    frame = FeatureFrame(names, np.column_stack(std_cols) if std_cols else np.zeros((n, 0)),
                         kinds, std_rec)

    raw_target = np.array([float(getattr(rec, spec.target)) for rec in listings])
    bad = np.flatnonzero(raw_target <= 0)
    if bad.size:
        raise NonPositiveTarget(
            f"non-positive {spec.target} for listing id {listings[bad[0]].id}")
    target = TargetVector(np.log(raw_target), "log", spec.target)
    return frame, target


def _design(frame):
    return np.column_stack([np.ones(frame.n), frame.values])


def _singular_columns(X, names, rdiag_tol=1e-10):
    """Name the dependent column set after a rank-deficient QR."""
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    scale = diag.max() if diag.size else 1.0
    offending = set()
    for j in np.flatnonzero(diag <= rdiag_tol * scale):
        if j == 0:
            offending.add("intercept")
            continue
        offending.add(names[j - 1])
        # columns that explain column j (dependency partners)
        prev = X[:, :j]
        w, *_ = np.linalg.lstsq(prev, X[:, j], rcond=None)
        for i in np.flatnonzero(np.abs(w) > 1e-6):
            offending.add("intercept" if i == 0 else names[i - 1])
    return offending


def ols_fit(frame, target):
    """Ordinary least squares with inference diagnostics.

    Raises SingularDesign (naming the dependent columns) when the design
    with intercept is exactly collinear.
    """
    y = np.asarray(target.values, dtype=np.float64)
    X = _design(frame)
    n, p1 = X.shape
    p = p1 - 1
    if n <= p1:
        raise SingularDesign(frame.names)  # underdetermined
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * diag.max():
        raise SingularDesign(_singular_columns(X, frame.names))
    beta = np.linalg.solve(r, q.T @ y)
    fitted = X @ beta
    residuals = y - fitted
    rss = float(residuals @ residuals)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    df = n - p1
    sigma2 = rss / df
    rinv = np.linalg.solve(r, np.eye(p1))
    cov = sigma2 * (rinv @ rinv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    pvalue = np.array([t_two_sided_p(float(t), df) if np.isfinite(t) else 0.0
                       for t in tstat])
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)
    aic_val = n * math.log(max(rss, RSS_FLOOR) / n) + 2 * (p + 2)
    return RegressionFit(
        names=list(frame.names), coef=beta[1:], intercept=float(beta[0]),
        se=se, tstat=tstat, pvalue=pvalue, fitted=fitted, residuals=residuals,
        r2=r2, adj_r2=adj, aic=aic_val, n=n, p=p,
        target_label=target.label, standardization=dict(frame.standardization))


def predict(fit, frame):
    """Apply a fit to a frame, matching columns by name."""
    if set(frame.names) != set(fit.names):
        missing = set(fit.names) - set(frame.names)
        extra = set(frame.names) - set(fit.names)
        raise ColumnMismatch(f"missing columns {sorted(missing)}, unexpected {sorted(extra)}")
    order = [frame.names.index(name) for name in fit.names]
    X = np.column_stack([np.ones(frame.n), frame.values[:, order]])
    beta = np.concatenate([[fit.intercept], fit.coef])
    return X @ beta


def vif(frame):
    """Variance inflation factor per column: 1 / (1 - R^2_j)."""
    out = {}
    for j, name in enumerate(frame.names):
        others = FeatureFrame(
            [m for i, m in enumerate(frame.names) if i != j],
            np.delete(frame.values, j, axis=1),
            [k for i, k in enumerate(frame.kinds) if i != j])
        target = TargetVector(frame.values[:, j], "raw", name)
        fit = ols_fit(others, target)
        out[name] = 1.0 / (1.0 - fit.r2) if fit.r2 < 1.0 else math.inf
    return out


def aic(fit):
    return fit.aic


def adjusted_r2(fit):
    return fit.adj_r2


def correlation_matrix(frame):
    """Pearson correlation matrix of the frame columns."""
    stds = frame.values.std(axis=0)
    constant = np.flatnonzero(stds == 0)
    if constant.size:
        raise ConstantColumn(f"constant column(s): {[frame.names[j] for j in constant]}")
    return np.corrcoef(frame.values, rowvar=False).reshape(frame.p, frame.p)


def ccdf(values):
    """Complementary CDF P(X > x) at the sorted unique values."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise EmptyInput("ccdf of an empty vector")
    xs, counts = np.unique(vals, return_counts=True)
    n = vals.size
    greater = n - np.cumsum(counts)
    return [(float(x), float(g) / n) for x, g in zip(xs, greater)]


@dataclass
class TTestResult:
    t: float
    df: int
    p: float
    zero_variance: bool = False


def paired_t_test(a, b):
    """Two-sided paired t-test on the differences a - b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired t-test needs two equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs n >= 2")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        if d[0] == 0.0:
            return TTestResult(0.0, n - 1, 1.0)
        return TTestResult(math.copysign(math.inf, d[0]), n - 1, 0.0, zero_variance=True)
    t = float(d.mean() / (sd / math.sqrt(n)))
    return TTestResult(t, n - 1, t_two_sided_p(t, n - 1))


def percent_reduction(base, new):
    """100 * (base - new) / base."""
    if base <= 0:
        raise NonPositiveBase("baseline error must be > 0")
    return 100.0 * (base - new) / base


def effect_size_pct(standardized_coef):
    """Percent rent change for a one-standard-deviation move: 100*(e^b - 1)."""
    return 100.0 * (math.exp(standardized_coef) - 1.0)
