"""Monte-Carlo scenario engine for scale-estimator and tuning-constant studies.

Random streams are keyed by ``(seed, replicate, stream_id)`` through
``SeedSequence`` feeding a counter-based Philox generator, so every
replicate can be generated independently and in any order. Normal
variates come from the inverse CDF of open-interval uniforms.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import special

from ._parallel import pmap
from .ali import MAD_CONSTANT
from .exceptions import MQError
from .fitting import Dataset, MQConfig, fit, huberised_mask
from .inference import sandwich_cov
from .tuning import CGrid, default_q_grid, select_c_av, select_c_inv

__all__ = [
    "FAMILIES",
    "ScenarioSpec",
    "StudyResult",
    "ScaleStudyConfig",
    "TuningStudyConfig",
    "TUNING_SCENARIOS",
    "generate",
    "huberised_proportion",
    "sample_quantile",
    "sample_expectile",
    "transition_distance",
    "run_scale_study",
    "run_tuning_study",
    "tuning_tables",
    "write_dataset_csv",
    "fmt",
]

FAMILIES = ("normal", "lognormal", "t3", "cauchy", "contaminated_normal")
HEADER = ("scenario", "method", "q", "c", "replicate", "stat", "value")

_COVARIATE, _ERROR, _MIXTURE, _EXTRA = 0, 1, 2, 3
_ASY_REPLICATE = 2 ** 32  # stream reserved for the single large-sample draw


def fmt(v):
    """Lossless, platform-stable text form of a number."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass(frozen=True)
class ScenarioSpec:
    """Data-generating design.

    ``beta`` of length one gives a null (intercept-only) model; longer
    vectors add that many minus one N(1, 1) covariates. ``alpha`` is the
    contamination share for ``contaminated_normal``, whose contaminating
    component is N(0, contam_sd**2).
    """

    family: str = "normal"
    beta: tuple = (0.0,)
    n: int = 10_000
    reps: int = 100
    seed: int = 0
    alpha: float = 0.0
    contam_sd: float = 150.0
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.n < 10 or self.reps < 1:
            raise ValueError("need n >= 10 and reps >= 1")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not self.name:
            label = self.family
            if self.family == "contaminated_normal":
                label = f"normal{round(100 * self.alpha):g}pct"
            object.__setattr__(self, "name", label)


def _rng(seed, replicate, stream):
    ss = np.random.SeedSequence([int(seed) % 2 ** 64, int(replicate), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def _open_uniform(rng, n):
    return (rng.integers(0, 2 ** 53, size=n, dtype=np.int64) + 0.5) / 2.0 ** 53


def _std_normal(rng, n):
    return special.ndtri(_open_uniform(rng, n))


def generate(spec, replicate):
    """Draw the ``replicate``-th dataset of a scenario."""
    n = spec.n
    err_rng = _rng(spec.seed, replicate, _ERROR)
    fam = spec.family
    if fam == "cauchy":
        e = np.tan(np.pi * (_open_uniform(err_rng, n) - 0.5))
    else:
        e = _std_normal(err_rng, n)
        if fam == "lognormal":
            e = np.exp(e)
        elif fam == "t3":
            chi = _std_normal(_rng(spec.seed, replicate, _EXTRA), 3 * n).reshape(n, 3)
            e = e / np.sqrt(np.sum(chi * chi, axis=1) / 3.0)
        elif fam == "contaminated_normal" and spec.alpha > 0:
            hit = _open_uniform(_rng(spec.seed, replicate, _MIXTURE), n) < spec.alpha
            e = np.where(hit, spec.contam_sd * e, e)
    beta = np.asarray(spec.beta)
    p = beta.size
    X = np.ones((n, p))
    if p > 1:
        X[:, 1:] = 1.0 + _std_normal(_rng(spec.seed, replicate, _COVARIATE), n * (p - 1)).reshape(n, p - 1)
    names = ("(Intercept)",) + tuple(f"x{j}" for j in range(1, p))
    return Dataset(X @ beta + e, X, names)


def huberised_proportion(mqfit, c=None):
    """Share of residuals with ``|e| > c * sigma``."""
    c = mqfit.config.c if c is None else c
    return float(np.mean(huberised_mask(mqfit.residuals, mqfit.sigma, c)))


def sample_quantile(y, q):
    """Order-statistic sample quantile (linear interpolation between order statistics)."""
    return float(np.quantile(np.asarray(y, dtype=float), q))


def sample_expectile(y, q):
    """Sample expectile: root of ``q*sum(y-e)_+ = (1-q)*sum(e-y)_+``, solved exactly."""
    y = np.sort(np.asarray(y, dtype=float))
    n = y.size
    if n == 0:
        raise ValueError("empty sample")
    below = np.cumsum(y)            # sum of the k+1 smallest values
    above = below[-1] - below       # sum of the rest
    k = np.arange(n)
    e = (q * above + (1.0 - q) * below) / (q * (n - k - 1) + (1.0 - q) * (k + 1))
    upper = np.append(y[1:], np.inf)
    ok = np.nonzero((e >= y) & (e <= upper))[0]
    return float(e[ok[0]]) if ok.size else float(e[-1])


def transition_distance(mqfit, quantile_ref, expectile_ref):
    """Signed gaps of the fitted intercept from the quantile and the expectile."""
    b0 = float(mqfit.beta[0])
    return b0 - quantile_ref, b0 - expectile_ref


class StudyResult:
    """Long-format simulation output: (scenario, method, q, c, replicate, stat, value)."""

    def __init__(self, records=None, meta=None):
        self.records = list(records or [])
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.records)

    def extend(self, rows):
        self.records.extend(rows)

    @property
    def frame(self):
        return pd.DataFrame(self.records, columns=list(HEADER))

    def to_csv(self, path=None):
        """Write UTF-8 CSV with ``\\n`` line ends; return the text when ``path`` is None."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for s, m, q, c, r, stat, v in self.records:
            w.writerow((s, m, fmt(q), fmt(c), fmt(r), stat, fmt(v)))
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path):
        df = pd.read_csv(path, float_precision="round_trip")
        return cls(df.itertuples(index=False, name=None))


# -------------------------------------------------------------- scale study

@dataclass
class ScaleStudyConfig:
    families: tuple = ("normal", "lognormal", "t3")
    cs: tuple = (0.5, 1.3, 3.0)
    qs: tuple = tuple(default_q_grid())
    methods: tuple = ("nMAD", "cMAD", "ML", "MM")
    n: int = 10_000
    reps: int = 100
    seed: int = 2021
    asy_n: int = 100_000  # 10**6 reproduces the original single-sample size
    workers: int | None = None


def _scale_cell_records(name, data, cfg, replicate, qs):
    rows = []
    y = data.y
    for method in cfg.methods:
        for c in cfg.cs:
            init = None
            for q in qs:
                key = (name, method, q, c, replicate)
                try:
                    f = fit(data, MQConfig(q=q, c=c, scale=method), init=init)
                except MQError:
                    rows.append(key + ("failed", 1.0))
                    init = None
                    continue
                init = (f.beta, f.sigma)
                dq, de = transition_distance(f, sample_quantile(y, q), sample_expectile(y, q))
                rows.extend([
                    key + ("beta0", float(f.beta[0])),
                    key + ("sigma", f.sigma),
                    key + ("huberised", huberised_proportion(f, c)),
                    key + ("dist_quantile", dq),
                    key + ("dist_expectile", de),
                    key + ("converged", float(f.converged)),
                ])
    return rows


def _asy_records(name, data, cfg, qs):
    rows = []
    for method in cfg.methods:
        for c in cfg.cs:
            init = None
            for q in qs:
                key = (name, method, q, c, -1)
                try:
                    f = fit(data, MQConfig(q=q, c=c, scale=method), init=init)
                    cov = sandwich_cov(data, f)
                except MQError:
                    rows.append(key + ("failed", 1.0))
                    init = None
                    continue
                init = (f.beta, f.sigma)
                rows.append(key + ("asy_var", data.n * float(cov.cov[0, 0])))
    return rows


def run_scale_study(config=None, **overrides):
    """Null-model comparison of the four scale rules across families, q and c.

    Per replicate and cell the fitted intercept, scale, Huberised share and
    distances to the sample quantile/expectile are recorded. One extra
    large sample per family (``replicate = -1``) gives the sandwich
    asymptotic variance ``n * Var(beta0)``; set ``asy_n=0`` to skip it.
    """
    cfg = config or ScaleStudyConfig()
    for k, v in overrides.items():
        setattr(cfg, k, v)
    # sort q so warm starts walk along the grid
    qs = tuple(sorted(float(q) for q in cfg.qs))
    tasks = [(fam, r) for fam in cfg.families for r in range(cfg.reps)]

    def run(task):
        fam, r = task
        spec = ScenarioSpec(fam, (0.0,), cfg.n, cfg.reps, cfg.seed)
        return _scale_cell_records(fam, generate(spec, r), cfg, r, qs)

    res = StudyResult(meta={"study": "scale", "config": cfg})
    for rows in pmap(run, tasks, cfg.workers):
        res.extend(rows)
    if cfg.asy_n:
        def run_asy(fam):
            spec = ScenarioSpec(fam, (0.0,), cfg.asy_n, 1, cfg.seed)
            return _asy_records(fam, generate(spec, _ASY_REPLICATE), cfg, qs)

        for rows in pmap(run_asy, cfg.families, cfg.workers):
            res.extend(rows)
    return res


def scale_summary(result):
    """Per-cell means over replicates, plus the large-sample asymptotic variance."""
    df = result.frame
    reps = df[df.replicate >= 0]
    out = reps.pivot_table(index=["scenario", "method", "q", "c"], columns="stat",
                           values="value", aggfunc="mean")
    out.columns.name = None
    asy = df[(df.replicate < 0) & (df.stat == "asy_var")]
    if len(asy):
        out = out.join(asy.set_index(["scenario", "method", "q", "c"])["value"].rename("asy_var"))
    return out.reset_index()


# ------------------------------------------------------------- tuning study

#: Error settings of the tuning-constant study.
TUNING_SCENARIOS = {
    "normal0": dict(family="contaminated_normal", alpha=0.0),
    "normal5": dict(family="contaminated_normal", alpha=0.05),
    "normal20": dict(family="contaminated_normal", alpha=0.20),
    "t3": dict(family="t3"),
    "cauchy": dict(family="cauchy"),
}
TUNING_METHODS = ("MQ(c=1.345)", "MQ AV", "MQ Inv", "MQ(c=4)")


@dataclass
class TuningStudyConfig:
    scenarios: tuple = tuple(TUNING_SCENARIOS)
    n_list: tuple = (1000,)
    qs: tuple = (0.25, 0.5, 0.75)
    methods: tuple = TUNING_METHODS
    reps: int = 100
    seed: int = 2021
    beta: tuple = (100.0, 4.0)
    av_grid: CGrid = field(default_factory=lambda: CGrid(step=0.02))
    inv_grid: CGrid = field(default_factory=lambda: CGrid(step=0.1))
    inv_qs: tuple = tuple(default_q_grid())
    workers: int | None = None


def tuning_spec(scenario, n, cfg):
    kw = TUNING_SCENARIOS[scenario]
    return ScenarioSpec(beta=cfg.beta, n=n, reps=cfg.reps, seed=cfg.seed,
                        name=f"{scenario}_n{n}", **kw)


def _tuning_replicate(spec, cfg, r):
    data = generate(spec, r)
    rows = []
    c_inv = None
    if "MQ Inv" in cfg.methods:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            c_inv = select_c_inv(data, cfg.inv_qs, cfg.inv_grid, workers=1).c_opt
    for q in cfg.qs:
        for method in cfg.methods:
            if method == "MQ(c=1.345)":
                c, f = 1.345, None
            elif method == "MQ(c=4)":
                c, f = 4.0, None
            elif method == "MQ AV":
                try:
                    sel = select_c_av(data, q, cfg.av_grid)
                except MQError:
                    rows.append((spec.name, method, q, math.nan, r, "failed", 1.0))
                    continue
                c, f = sel.c_opt, sel.fit
            elif method == "MQ Inv":
                c, f = c_inv, None
            else:
                raise ValueError(f"unknown method {method!r}")
            key = (spec.name, method, q, c, r)
            try:
                f = f or fit(data, MQConfig(q=q, c=c, scale="cMAD"))
                se = sandwich_cov(data, f).se
            except MQError:
                rows.append(key + ("failed", 1.0))
                continue
            rows.append(key + ("c", c))
            for j in range(f.beta.size):
                rows.append(key + (f"beta{j}", float(f.beta[j])))
                rows.append(key + (f"se{j}", float(se[j])))
            rows.append(key + ("converged", float(f.converged)))
    return rows


def run_tuning_study(config=None, **overrides):
    """Regression study comparing fixed and data-driven tuning constants.

    Every replicate records, per order ``q`` and method, the constant used,
    the coefficient estimates and their sandwich standard errors.
    """
    cfg = config or TuningStudyConfig()
    for k, v in overrides.items():
        setattr(cfg, k, v)
    tasks = [(tuning_spec(s, n, cfg), r)
             for n in cfg.n_list for s in cfg.scenarios for r in range(cfg.reps)]
    res = StudyResult(meta={"study": "tuning", "config": cfg})
    for rows in pmap(lambda t: _tuning_replicate(t[0], cfg, t[1]), tasks, cfg.workers):
        res.extend(rows)
    return res


def _nmad(x):
    x = np.asarray(x, dtype=float)
    return float(np.median(np.abs(x - np.median(x))) / MAD_CONSTANT)


def tuning_summary(result):
    """Long summary: MAD of estimates, median SE and median c per cell.

    MAD is normalized by ``Phi^{-1}(3/4)`` so it is on the standard-error scale.
    """
    df = result.frame
    rows = []
    for (scen, method, q), g in df.groupby(["scenario", "method", "q"], sort=False):
        stats = g.pivot_table(index="replicate", columns="stat", values="value")
        j = 0
        while f"beta{j}" in stats:
            rows.append(dict(scenario=scen, method=method, q=q, coef=f"beta{j}",
                             mad=_nmad(stats[f"beta{j}"].dropna()),
                             median_se=float(np.median(stats[f"se{j}"].dropna())),
                             median_c=float(np.median(stats["c"].dropna())),
                             reps=int(stats[f"beta{j}"].notna().sum())))
            j += 1
    return pd.DataFrame(rows)


def tuning_tables(summary):
    """Pivot a tuning summary into two wide tables (MAD, median SE).

    Rows are (coef, method); columns are (q, scenario).
    """
    order = {m: i for i, m in enumerate(TUNING_METHODS)}
    out = {}
    for value in ("mad", "median_se"):
        t = summary.pivot_table(index=["coef", "method"], columns=["q", "scenario"],
                                values=value, sort=False)
        t = t.sort_index(level=[0, 1], key=lambda s: s.map(order) if s.name == "method" else s)
        out[value] = t
    return out


def write_dataset_csv(data, path, response="y"):
    """Write a dataset as CSV (design columns except a leading all-ones intercept)."""
    cols = [(name, data.X[:, j]) for j, name in enumerate(data.names)
            if not (j == 0 and np.all(data.X[:, 0] == 1.0))]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response] + [n for n, _ in cols])
        for i in range(data.n):
            w.writerow([fmt(data.y[i])] + [fmt(v[i]) for _, v in cols])
