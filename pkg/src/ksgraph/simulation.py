"""Scenario generators S1-S7 and Monte Carlo size/power estimation.

Random numbers come from numpy's PCG64 bit generator; normals use
``Generator.standard_normal`` (ziggurat), chi-square draws use
``Generator.chisquare`` (gamma based). Replicate ``r`` of a run seeded with
``seed`` draws its data from ``SeedSequence(seed, spawn_key=(r, 0))`` and its
permutations from ``SeedSequence(seed, spawn_key=(r, 1))``, so results do
not depend on execution order or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .counts_moments import count_edges, null_moments
from .errors import InputError, KSGraphError, SimulationError
from .graph_core import Dataset, build_kmst, pairwise_distances
from .inference import asymptotic_test, permutation_test, ss_test
from .statistics import compute_statistic

__all__ = [
    "FAMILIES",
    "ScenarioSpec",
    "PowerReport",
    "ar1_cholesky",
    "ar1_covariance",
    "default_separation",
    "generate_scenario",
    "estimate_power",
    "simulate_statistics",
    "canonical_test",
]

FAMILIES = (
    "S1_location",
    "S2_scale",
    "S3_covariance",
    "S4_kurtosis",
    "S5_skew_kurtosis",
    "S6_lognormal",
    "S7_student_t",
)

_ALIASES = {f.split("_")[0]: f for f in FAMILIES}

# separation values used in the published simulation study
_S1_MU = {3: 0.14, 4: 0.1, 5: 0.07}
_S2_SIGMA2 = {3: 0.08, 4: 0.05, 5: 0.07}
_DEFAULTS = {
    "S3_covariance": 0.15,
    "S4_kurtosis": 0.1,
    "S5_skew_kurtosis": 1.0,
    ("S6_lognormal", "location"): 0.04,
    ("S6_lognormal", "scale"): 0.05,
    ("S7_student_t", "location"): 0.04,
    ("S7_student_t", "scale"): 0.1,
}
AR_RHO = 0.4
T_DF = 20


def default_separation(family: str, K: int = 3, variant: str = "location") -> float:
    family = _ALIASES.get(family, family)
    if family == "S1_location":
        return _S1_MU.get(K, 0.14)
    if family == "S2_scale":
        return _S2_SIGMA2.get(K, 0.08)
    if family in ("S6_lognormal", "S7_student_t"):
        return _DEFAULTS[(family, variant)]
    return _DEFAULTS[family]


@dataclass(frozen=True)
class ScenarioSpec:
    """One data-generating configuration.

    ``separation`` means: S1 mean step ``mu``; S2 variance step ``sigma^2``;
    S3 AR(1) correlation step (``rho_i = 0.1 + separation * (i-1)``); S4 t
    degrees-of-freedom step (``nu_i = 2 + separation * (i-1)``); S5 chi-square
    degrees-of-freedom step (``nu_i = 1 + separation * (i-1)``); S6/S7 mean
    step (``variant="location"``) or covariance inflation step
    (``variant="scale"``). ``None`` selects the published default.
    """

    family: str = "S1_location"
    K: int = 3
    d: int = 50
    n: int | tuple[int, ...] = 50
    separation: float | None = None
    variant: str = "location"

    def __post_init__(self):
        family = _ALIASES.get(self.family, self.family)
        if family not in FAMILIES:
            raise InputError(f"unknown scenario family {self.family!r}")
        object.__setattr__(self, "family", family)
        if self.K < 1 or self.d < 1:
            raise InputError("K and d must be positive")
        n = self.n
        sizes = (int(n),) * self.K if np.ndim(n) == 0 else tuple(int(v) for v in n)
        if len(sizes) != self.K or min(sizes) < 1:
            raise InputError(f"need {self.K} positive group sizes, got {n!r}")
        object.__setattr__(self, "n", sizes)
        if self.variant not in ("location", "scale"):
            raise InputError("variant must be 'location' or 'scale'")
        if self.separation is None:
            object.__setattr__(self, "separation", default_separation(family, self.K, self.variant))
        object.__setattr__(self, "separation", float(self.separation))
        self._validate()

    def _validate(self):
        s, top = self.separation, self.K - 1
        if self.family in ("S2_scale",) or (self.family in ("S6_lognormal", "S7_student_t")
                                            and self.variant == "scale"):
            if 1 + s * top <= 0 or 1 + s * 0 <= 0:
                raise InputError("variance factors must stay positive")
        if self.family == "S3_covariance":
            rhos = [0.1 + s * i for i in range(self.K)]
            if min(rhos) <= -1 or max(rhos) >= 1:
                raise InputError(f"AR(1) correlations {rhos} must lie in (-1, 1)")
        if self.family == "S4_kurtosis":
            if min(2 + s * i for i in range(self.K)) <= 1:
                raise InputError("t degrees of freedom must exceed 1")
        if self.family == "S5_skew_kurtosis":
            if min(1 + s * i for i in range(self.K)) <= 0:
                raise InputError("chi-square degrees of freedom must be positive")

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return self.n

    def asdict(self) -> dict:
        out = asdict(self)
        out["n"] = list(self.n)
        return out


def ar1_covariance(d: int, rho: float) -> np.ndarray:
    lags = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    return rho ** lags


def ar1_cholesky(d: int, rho: float) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T`` the AR(1) matrix ``rho^|u-v|``."""
    if not -1 < rho < 1:
        raise InputError("AR(1) correlation must lie in (-1, 1)")
    i = np.arange(d)
    lag = np.subtract.outer(i, i)
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(lag >= 0, float(rho) ** np.maximum(lag, 0), 0.0)
    L[:, 1:] *= np.sqrt(1.0 - rho * rho)
    return L


def _t_standardized(rng, df, shape):
    x = rng.standard_t(df, size=shape)
    if df > 2:
        x /= np.sqrt(df / (df - 2.0))
    return x


def _group(spec: ScenarioSpec, i: int, size: int, rng) -> np.ndarray:
    d, s = spec.d, spec.separation
    fam = spec.family
    if fam == "S1_location":
        return rng.standard_normal((size, d)) + s * i
    if fam == "S2_scale":
        return rng.standard_normal((size, d)) * np.sqrt(1.0 + s * i)
    if fam == "S3_covariance":
        L = ar1_cholesky(d, 0.1 + s * i)
        return rng.standard_normal((size, d)) @ L.T
    if fam == "S4_kurtosis":
        return _t_standardized(rng, 2.0 + s * i, (size, d))
    if fam == "S5_skew_kurtosis":
        df = 1.0 + s * i
        return (rng.chisquare(df, size=(size, d)) - df) / np.sqrt(2.0 * df)
    L = ar1_cholesky(d, AR_RHO)
    shift = s * i if spec.variant == "location" else 0.0
    inflate = np.sqrt(1.0 + s * i) if spec.variant == "scale" else 1.0
    z = rng.standard_normal((size, d)) @ L.T * inflate
    if fam == "S6_lognormal":
        return np.exp(z + shift)
    w = rng.chisquare(T_DF, size=(size, 1))
    return z / np.sqrt(w / T_DF) + shift


def _seed_sequence(seed, *key):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(seed, spawn_key=key)


def generate_scenario(spec: ScenarioSpec, replicate_seed) -> Dataset:
    """Draw ``n_i`` observations for each of the ``K`` groups of ``spec``."""
    rng = np.random.default_rng(_seed_sequence(replicate_seed))
    groups = [_group(spec, i, size, rng) for i, size in enumerate(spec.n)]
    return Dataset.from_groups(groups)


_CANONICAL = {
    "SW": "SW_asym", "SB": "SB_asym", "SA": "SA_asym", "SS": "SS_fast", "S": "perm_S",
    "SW_asym": "SW_asym", "SB_asym": "SB_asym", "SA_asym": "SA_asym", "SS_fast": "SS_fast",
    "perm_S": "perm_S", "perm_SW": "perm_SW", "perm_SB": "perm_SB", "perm_SA": "perm_SA",
}


def canonical_test(name: str) -> str:
    """Map a short test name (``SW``, ``SB``, ``SA``, ``SS``, ``S``) to its method id."""
    try:
        return _CANONICAL[name]
    except KeyError:
        raise InputError(f"unknown test {name!r}; choose from {sorted(_CANONICAL)}") from None


def run_method(method: str, G, labels, moments, n_perm: int, seed) -> "TestResult":
    if method.endswith("_asym"):
        return asymptotic_test(G, labels, kind=method[:2], moments=moments, diagnostics=False)
    if method == "SS_fast":
        return ss_test(G, labels, moments=moments, diagnostics=False)
    kind = method.split("_", 1)[1]
    return permutation_test(G, labels, kind=kind, n_perm=n_perm, seed=seed,
                            moments=moments, diagnostics=False)


def _perm_seed(seed, r: int) -> int:
    return int(_seed_sequence(seed, r, 1).generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class PowerReport:
    spec: ScenarioSpec
    tests: tuple[str, ...]
    alpha: float
    replications: int
    rejections: dict
    seed: int | None
    k: int = 5
    n_perm: int | None = None

    @property
    def rejection_rate(self) -> dict:
        return {t: self.rejections[t] / self.replications for t in self.tests}

    @property
    def mc_se(self) -> dict:
        rates = self.rejection_rate
        return {t: float(np.sqrt(p * (1 - p) / self.replications)) for t, p in rates.items()}

    def rows(self) -> list[dict]:
        out = []
        for t in self.tests:
            out.append({
                "family": self.spec.family,
                "variant": self.spec.variant,
                "separation": self.spec.separation,
                "d": self.spec.d,
                "K": self.spec.K,
                "n": ";".join(str(v) for v in self.spec.n),
                "k": self.k,
                "test": t,
                "alpha": self.alpha,
                "replications": self.replications,
                "rejections": self.rejections[t],
                "rejection_rate": self.rejection_rate[t],
                "mc_se": self.mc_se[t],
                "seed": self.seed,
            })
        return out


def _map(fn, items, n_jobs):
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def estimate_power(spec: ScenarioSpec, tests=("SS", "SA", "S"), alpha: float = 0.05,
                   replications: int = 1000, seed: int = 0, *, k: int = 5,
                   n_perm: int = 500, metric: str = "euclidean",
                   n_jobs: int = 1) -> PowerReport:
    """Rejection rate of each test over ``replications`` simulated datasets."""
    if int(replications) != replications or replications < 1:
        raise InputError("replications must be a positive integer")
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    methods = tuple(dict.fromkeys(canonical_test(t) for t in tests))

    def replicate(r):
        try:
            data = generate_scenario(spec, _seed_sequence(seed, r, 0))
            G = build_kmst(pairwise_distances(data, metric), k)
            moments = null_moments(G, data.group_sizes)
            pseed = _perm_seed(seed, r)
            return [run_method(m, G, data.labels, moments, n_perm, pseed).p_value <= alpha
                    for m in methods]
        except KSGraphError as exc:
            raise SimulationError(f"replicate {r} failed: {exc}") from exc

    decisions = np.array(_map(replicate, range(int(replications)), n_jobs), dtype=bool)
    rejections = {m: int(decisions[:, j].sum()) for j, m in enumerate(methods)}
    uses_perm = any(m.startswith("perm_") for m in methods)
    return PowerReport(spec, methods, alpha, int(replications), rejections, seed, k,
                       n_perm if uses_perm else None)


def simulate_statistics(spec: ScenarioSpec, kinds=("SW", "SB", "SA"), replications: int = 1000,
                        seed: int = 0, *, k: int = 5, metric: str = "euclidean",
                        n_jobs: int = 1) -> dict:
    """Statistic values and covariance ranks over simulated replicates.

    Returns ``{kind: (values, ranks)}`` with one entry per replicate.
    """
    if replications < 0:
        raise InputError("replications must be nonnegative")

    def replicate(r):
        try:
            data = generate_scenario(spec, _seed_sequence(seed, r, 0))
            G = build_kmst(pairwise_distances(data, metric), k)
            moments = null_moments(G, data.group_sizes)
            counts = count_edges(G, data.labels, spec.K)
            return [compute_statistic(kd, counts, moments) for kd in kinds]
        except KSGraphError as exc:
            raise SimulationError(f"replicate {r} failed: {exc}") from exc

    stats = _map(replicate, range(int(replications)), n_jobs)
    out = {}
    for j, kd in enumerate(kinds):
        values = np.array([row[j].value for row in stats], dtype=float)
        ranks = [row[j].dof for row in stats]
        out[kd] = (values, ranks)
    return out


def null_spec(spec: ScenarioSpec) -> ScenarioSpec:
    """The same configuration with zero separation."""
    return replace(spec, separation=0.0)


def qq_pairs(values, dof: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sorted sample values against chi-square quantiles at ``(i - 0.5) / n``.

    Returns ``(probabilities, empirical, theoretical)``.
    """
    from scipy.stats import chi2

    empirical = np.sort(np.asarray(values, dtype=float))
    n = len(empirical)
    probs = (np.arange(1, n + 1) - 0.5) / n if n else np.zeros(0)
    return probs, empirical, chi2.ppf(probs, dof)


def qq_correlation(values, dof: int) -> float:
    _, emp, theo = qq_pairs(values, dof)
    if len(emp) < 2:
        return float("nan")
    return float(np.corrcoef(emp, theo)[0, 1])


def modal_rank(ranks) -> int:
    ranks = [int(r) for r in ranks]
    values, counts = np.unique(ranks, return_counts=True)
    return int(values[np.argmax(counts)])
