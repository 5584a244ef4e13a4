"""Trial-membership model and inverse probability of sampling weights.

The selection model is a main-effects logistic regression of ``S`` (1 for
trial rows, 0 for target rows) on the stacked covariates, fitted by
iteratively reweighted least squares (Newton-Raphson with step halving).
Columns are centred and scaled internally; coefficients are reported on the
original covariate scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NonIdentifiedError, NumericalError, SpecificationError
from .population import COVARIATES, Cohort, PopulationSpec, expand_covariates

TOL_LOGLIK = 1e-10
TOL_SCORE = 1e-8
# a fit stopped by the log-likelihood rule must also meet this on the original scale
SCORE_CHECK = 1e-6
MAX_ITER = 100
RIDGE = 1e-8
MAX_HALVINGS = 40
LL_RESOLUTION = 1e-13


@dataclass(frozen=True)
class WeightingSpec:
    name: str
    covariates: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.covariates:
            raise SpecificationError("covariates", f"weighting spec {self.name!r} has no covariates")
        unknown = [c for c in self.covariates if c not in COVARIATES]
        if unknown:
            raise SpecificationError("covariates", f"unknown covariates {unknown}")
        if len(set(self.covariates)) != len(self.covariates):
            raise SpecificationError("covariates", "duplicate covariates")

    @property
    def columns(self) -> tuple[str, ...]:
        return expand_covariates(self.covariates)

    def feasible_for(self, spec: PopulationSpec) -> bool:
        return all(spec.is_measured(c) for c in self.covariates)


def weighting_catalog() -> dict[str, WeightingSpec]:
    return {
        "dem_clin": WeightingSpec("dem_clin", COVARIATES),
        "dem_only": WeightingSpec("dem_only", ("age", "female", "race", "hispanic")),
    }


@dataclass
class LogisticFit:
    coefficients: np.ndarray  # intercept first, original scale
    converged: bool
    iterations: int
    max_abs_score: float
    loglik: float
    loglik_trace: list[float] = field(repr=False)
    linear_predictor: np.ndarray = field(repr=False)


def _loglik_and_prob(eta: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Log-likelihood and fitted probabilities sharing one ``exp`` pass."""
    e = np.exp(-np.abs(eta))
    # log(1 + e^eta) without overflow
    softplus = np.maximum(eta, 0.0) + np.log1p(e)
    ll = float(np.dot(y, eta) - softplus.sum())
    inv = 1.0 / (1.0 + e)
    p = np.where(eta >= 0.0, inv, e * inv)
    return ll, p


def irls_logistic(
    X: np.ndarray,
    y: np.ndarray,
    *,
    names=None,
    tol_loglik: float = TOL_LOGLIK,
    tol_score: float = TOL_SCORE,
    max_iter: int = MAX_ITER,
    ridge: float = RIDGE,
    start=None,
) -> LogisticFit:
    """Maximum-likelihood logistic regression of ``y`` on ``X`` plus an intercept.

    Stops when the standardized score falls below ``tol_score``, or when the
    relative log-likelihood change falls below ``tol_loglik`` and the score on
    the original scale is below ``SCORE_CHECK``. Non-convergence after
    ``max_iter`` iterations is reported through ``converged=False``.

    ``start`` optionally gives initial coefficients on the original scale
    (intercept first); it changes the path, not the optimum.
    """
    # work on covariate-major rows; a Fortran-ordered X transposes for free
    Xt = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
    y = np.asarray(y, dtype=np.float64)
    k, n = Xt.shape
    if n == 0:
        raise SpecificationError("X", "no rows")
    names = [f"x{j}" for j in range(k)] if names is None else list(names)

    center = Xt.mean(axis=1)
    scale = Xt.std(axis=1)
    const = [names[j] for j in range(k) if not scale[j] > 0]
    if const:
        raise NonIdentifiedError(f"constant covariate(s) in stacked data: {const}")
    Zt = np.empty((k + 1, n))
    Zt[0] = 1.0
    np.subtract(Xt, center[:, None], out=Zt[1:])
    Zt[1:] /= scale[:, None]

    ybar = y.mean()
    if ybar <= 0.0 or ybar >= 1.0:
        raise NonIdentifiedError("outcome is constant; intercept not identified")
    beta = np.zeros(k + 1)
    beta[0] = np.log(ybar / (1.0 - ybar))
    eta = beta @ Zt
    ll, p = _loglik_and_prob(eta, y)
    if start is not None:
        start = np.asarray(start, dtype=np.float64)
        cand = np.empty(k + 1)
        cand[1:] = start[1:] * scale
        cand[0] = start[0] + np.dot(start[1:], center)
        eta_start = cand @ Zt
        ll_start, p_start = _loglik_and_prob(eta_start, y)
        if ll_start > ll:
            beta, eta, ll, p = cand, eta_start, ll_start, p_start
    trace = [ll]

    def original_score(g: np.ndarray) -> np.ndarray:
        # sum (y - p) x_j recovered from the standardized score
        out = np.empty_like(g)
        out[0] = g[0]
        out[1:] = scale * g[1:] + center * g[0]
        return out

    converged = False
    ll_settled = False
    it = 0
    g = np.zeros(k + 1)
    while True:
        g = Zt @ (y - p)
        score_orig = np.max(np.abs(original_score(g)))
        if np.max(np.abs(g)) < tol_score or (ll_settled and score_orig < SCORE_CHECK):
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        A = Zt * np.sqrt(p * (1.0 - p))
        H = A @ A.T
        H[np.diag_indices_from(H)] += ridge
        step = np.linalg.solve(H, g)

        # differences below the rounding resolution of ll are not a decrease
        slack = LL_RESOLUTION * max(abs(ll), 1.0)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + t * step
            eta_new = cand @ Zt
            ll_new, p_new = _loglik_and_prob(eta_new, y)
            if ll_new >= ll - slack:
                break
            t *= 0.5
        else:
            # no ascent direction left at floating-point resolution
            break
        ll_settled = abs(ll_new - ll) <= tol_loglik * max(abs(ll), 1.0)
        beta, eta, ll, p = cand, eta_new, ll_new, p_new
        trace.append(ll)

    coef = np.empty(k + 1)
    coef[1:] = beta[1:] / scale
    coef[0] = beta[0] - np.dot(coef[1:], center)
    return LogisticFit(
        coefficients=coef,
        converged=converged,
        iterations=it,
        max_abs_score=float(np.max(np.abs(original_score(g)))),
        loglik=ll,
        loglik_trace=trace,
        linear_predictor=eta,
    )


@dataclass
class SelectionFit:
    weighting: str
    target: str
    coefficients: dict[str, float]
    converged: bool
    iterations: int
    max_abs_score: float
    loglik_trace: list[float] = field(repr=False)
    probabilities: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    marginal_p: float
    n_trial: int
    n_target: int

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights)

    def diagnostics(self) -> dict:
        row = {
            "weighting_model": self.weighting,
            "target": self.target,
            "converged": self.converged,
            "iterations": self.iterations,
            "max_abs_score": self.max_abs_score,
            "ess": self.ess,
            "min_weight": float(self.weights.min()),
            "max_weight": float(self.weights.max()),
        }
        row.update({f"coef_{k}": v for k, v in self.coefficients.items()})
        return row


def ipsw_weights(probabilities, marginal_p: float, max_weight: float | None = None) -> np.ndarray:
    """``marginal_p / p_i`` for every trial row, optionally capped at ``max_weight``."""
    p = np.asarray(probabilities, dtype=np.float64)
    if not 0.0 < marginal_p < 1.0:
        raise NumericalError(f"marginal_p must lie in (0, 1), got {marginal_p}")
    bad = np.flatnonzero(~((p > 0.0) & (p <= 1.0)))
    if bad.size:
        raise NumericalError(f"selection probability out of (0, 1] at row {int(bad[0])}: {p[bad[0]]}")
    w = marginal_p / p
    if max_weight is not None:
        w = np.minimum(w, max_weight)
    return w


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise NumericalError("effective sample size of an empty weight vector")
    return float(w.sum() ** 2 / np.dot(w, w))


def _moment_start(X: np.ndarray, n1: int, cols) -> np.ndarray:
    """Independent-covariate log density ratio, used as the IRLS starting point.

    Exact for independent binary covariates; age uses the pooled-variance
    normal approximation. Only affects the iteration count.
    """
    m1 = np.array([X[:n1, j].mean() for j in range(len(cols))])
    m0 = np.array([X[n1:, j].mean() for j in range(len(cols))])
    m_all = (n1 * m1 + (len(X) - n1) * m0) / len(X)
    eps = 1e-6
    coef = np.zeros(len(cols) + 1)
    for j, col in enumerate(cols):
        if col == "age":
            var = X[:, j].var()
            coef[j + 1] = (m1[j] - m0[j]) / var if var > 0 else 0.0
        else:
            p1 = np.clip(m1[j], eps, 1 - eps)
            p0 = np.clip(m0[j], eps, 1 - eps)
            coef[j + 1] = np.log(p1 / (1 - p1)) - np.log(p0 / (1 - p0))
    if "race_black" in cols and "race_other" in cols:
        jb, jo = cols.index("race_black"), cols.index("race_other")
        w1 = np.clip(1 - m1[jb] - m1[jo], eps, 1)
        w0 = np.clip(1 - m0[jb] - m0[jo], eps, 1)
        for j in (jb, jo):
            coef[j + 1] = np.log(np.clip(m1[j], eps, 1) / w1) - np.log(np.clip(m0[j], eps, 1) / w0)
    pbar = n1 / len(X)
    coef[0] = np.log(pbar / (1 - pbar)) - np.dot(coef[1:], m_all)
    return coef


def fit_selection_model(
    trial: Cohort,
    target: Cohort,
    spec: WeightingSpec,
    max_weight: float | None = None,
) -> SelectionFit:
    cols = spec.columns
    for cohort in (trial, target):
        if len(cohort) == 0:
            raise SpecificationError("cohort", f"cohort {cohort.spec_name!r} is empty")
        for col in cols:
            if cohort[col] is None:
                raise SpecificationError(
                    col,
                    f"{spec.name} needs {col!r}, which is UNMEASURED in {cohort.spec_name!r}",
                )
    n1, n0 = len(trial), len(target)
    X = np.empty((n1 + n0, len(cols)), order="F")
    for j, col in enumerate(cols):
        X[:n1, j] = trial[col]
        X[n1:, j] = target[col]
    s = np.zeros(n1 + n0)
    s[:n1] = 1.0

    fit = irls_logistic(X, s, names=cols, start=_moment_start(X, n1, cols))
    probs = expit(fit.linear_predictor[:n1])
    marginal_p = n1 / (n1 + n0)
    return SelectionFit(
        weighting=spec.name,
        target=target.spec_name,
        coefficients=dict(zip(("intercept",) + cols, map(float, fit.coefficients))),
        converged=fit.converged,
        iterations=fit.iterations,
        max_abs_score=fit.max_abs_score,
        loglik_trace=fit.loglik_trace,
        probabilities=probs,
        weights=ipsw_weights(probs, marginal_p, max_weight),
        marginal_p=marginal_p,
        n_trial=n1,
        n_target=n0,
    )
