"""Sequence-space observation model, weighted chi-square statistics,
thresholds, and the adaptive selector.

Observations per candidate subset u of order k are X_l = eta_u theta_l + eps xi_l
on the punctured lattice.  For each grid point m the statistic

    S_{u,m} = sum_l omega_l(r*_{k,m}) ((X_l / eps)^2 - 1)

has mean 0 and variance 1 under the null (sum omega^2 = 1/2).  A subset is
selected when max_m S_{u,m} exceeds t_k = sqrt((2 + eps_hat)(log C(d,k) + log M)).

Randomness is organised as counter-based substreams: every (cycle, order,
subset-rank) owns a Philox stream spawned from the master seed, so full and
pooled enumeration agree on shared subsets and reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import CapacityError
from .extremal import GridSpec, WeightProfile, calibrate_radii, weights
from .lattice import (
    DEFAULT_POINT_CAP,
    DimensionSpec,
    Subset,
    ball_coords,
    log_binomial,
    subset_rank,
)
from .signals import CoefficientTable, SparsityPattern

# Stream phase tags keep independent uses of the master seed disjoint.
_PHASE_OBS = 1
_PHASE_POOL = 2
_PHASE_AUDIT = 3

PRESET_TRUNCATION = {1: 622, 2: 154, 3: 65, 4: 36}


def substream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for a (seed, key...) address; reruns are bit-identical."""
    words = []
    for part in key:
        part = int(part)
        if part < 0:
            raise ValueError("stream key parts must be nonnegative")
        words.extend((part >> 32, part & 0xFFFFFFFF))
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(words))
    return np.random.Generator(np.random.Philox(ss))


def observation_stream(seed: int, cycle: int, k: int, rank: int) -> np.random.Generator:
    return substream(seed, _PHASE_OBS, cycle, k, rank)


def pool_stream(seed: int, k: int) -> np.random.Generator:
    return substream(seed, _PHASE_POOL, k)


def audit_stream(seed: int, chunk: int) -> np.random.Generator:
    return substream(seed, _PHASE_AUDIT, chunk)


def epsilon_hat(d: int, k: int, rule: str = "fixed", s: int | None = None) -> float:
    """Threshold inflation: 1/sqrt(log C(d,k)), or the documented growing-s rule.

    The growing-s variant returns max(1/sqrt(log d), log(s) log(log d) / log d),
    a choice that vanishes while eps_hat log d diverges and log s stays
    negligible against eps_hat log d in the regimes s = o(d), log log d = o(s).
    """
    if rule == "fixed":
        log_c = log_binomial(d, k)
        if log_c <= 0.0:
            raise ValueError(f"log C({d},{k}) = {log_c:.3g} is not positive")
        return 1.0 / math.sqrt(log_c)
    if rule != "growing_s":
        raise ValueError(f"rule must be 'fixed' or 'growing_s', got {rule!r}")
    if s is None:
        raise ValueError("growing_s rule requires s")
    log_d = math.log(d)
    if log_d <= 0.0 or s < 2 or math.log(log_d) <= 0.0:
        raise ValueError(f"growing_s rule needs d > e and s >= 2, got d={d}, s={s}")
    return max(1.0 / math.sqrt(log_d), math.log(s) * math.log(log_d) / log_d)


def threshold(d: int, k: int, M: int, eps_hat: float) -> float:
    """Selection threshold sqrt((2 + eps_hat)(log C(d,k) + log M))."""
    if M < 1:
        raise ValueError(f"grid size M must be >= 1, got {M}")
    return math.sqrt((2.0 + eps_hat) * (log_binomial(d, k) + math.log(M)))


def truncation_radius(
    k: int,
    profiles: Sequence[WeightProfile] | None = None,
    mode: str = "rule",
) -> int:
    """Lattice truncation n per order.

    ``preset`` returns the benchmark constants {622, 154, 65, 36} for
    k in 1..4.  ``rule`` returns ceil(max_m R(r*_{k,m})), the smallest box
    covering every weight support of the grid.
    """
    if mode == "preset":
        if k not in PRESET_TRUNCATION:
            raise ValueError(f"no preset truncation for k={k}; use rule mode")
        return PRESET_TRUNCATION[k]
    if mode != "rule":
        raise ValueError(f"mode must be 'rule' or 'preset', got {mode!r}")
    if not profiles:
        raise ValueError("rule mode requires the calibrated weight profiles")
    return int(math.ceil(max(p.support_radius for p in profiles)))


@dataclass(frozen=True, eq=False)
class SelectorConfig:
    """Calibrated selector: grid, weight profiles, thresholds, truncation."""

    dim: DimensionSpec
    grid: GridSpec
    profiles: Mapping[int, tuple[WeightProfile, ...]]
    thresholds: Mapping[int, float]
    truncation: Mapping[int, int]
    truncation_mode: str
    eps_hat_rule: str

    def orders(self) -> tuple[int, ...]:
        return tuple(sorted(self.profiles))


def build_selector_config(
    dim: DimensionSpec,
    M: int = 20,
    calibration: str = "exact",
    truncation: str = "preset",
    eps_hat_rule: str = "fixed",
    cap: int = DEFAULT_POINT_CAP,
) -> SelectorConfig:
    """Calibrate the full per-order grid for a problem configuration.

    For every order k <= s: an M-point sparsity grid, radii r* solving
    a(r*) = (1 + sqrt(1-beta_m)) sqrt(2 log C(d,k)), weight profiles built from
    the exact lattice sum (so their squared sum is exactly 1/2), the threshold
    t_k, and a truncation box checked to cover every nonzero weight.
    """
    targets: dict[int, tuple[float, ...]] = {}
    r_stars: dict[int, tuple[float, ...]] = {}
    a_values: dict[int, tuple[float, ...]] = {}
    eps_hats: dict[int, float] = {}
    profiles: dict[int, tuple[WeightProfile, ...]] = {}
    thresholds_map: dict[int, float] = {}
    trunc: dict[int, int] = {}
    betas: tuple[float, ...] = ()
    for k in range(1, dim.s + 1):
        blist, tlist, rlist, alist = calibrate_radii(
            dim.d, k, dim.sigma, dim.epsilon, M, mode=calibration, cap=cap
        )
        betas = tuple(blist)
        targets[k] = tuple(tlist)
        r_stars[k] = tuple(rlist)
        a_values[k] = tuple(alist)
        eps_hats[k] = epsilon_hat(dim.d, k, rule=eps_hat_rule, s=dim.s)
        profiles[k] = tuple(weights(r, k, dim.sigma, dim.epsilon, cap=cap) for r in rlist)
        thresholds_map[k] = threshold(dim.d, k, M, eps_hats[k])
        n_k = truncation_radius(k, profiles[k], mode=truncation)
        covered = max(p.max_abs_coord for p in profiles[k])
        if covered > n_k:
            raise ValueError(
                f"truncation n={n_k} at k={k} misses weights up to |l|={covered}"
            )
        trunc[k] = n_k
    grid = GridSpec(
        M=M,
        betas=betas,
        targets=targets,
        r_stars=r_stars,
        a_values=a_values,
        eps_hat=eps_hats,
        calibration_mode=calibration,
    )
    return SelectorConfig(
        dim=dim,
        grid=grid,
        profiles=profiles,
        thresholds=thresholds_map,
        truncation=trunc,
        truncation_mode=truncation,
        eps_hat_rule=eps_hat_rule,
    )


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Observation:
    """Observed values X_l on the generated index set of one subset."""

    owner: Subset
    values: dict[tuple[int, ...], float]
    epsilon: float
    truncation_n: int


def _signal_table(
    pattern: SparsityPattern, subset: Subset, n: int
) -> CoefficientTable | None:
    comp = pattern.component_for(subset)
    if comp is None:
        return None
    return CoefficientTable.from_component(comp, n)


def simulate_observations(
    pattern: SparsityPattern,
    config: SelectorConfig,
    subsets: Iterable[Subset],
    seed: int,
    cycle: int = 0,
    cap: int = DEFAULT_POINT_CAP,
) -> Iterator[Observation]:
    """Generate X_l = eta theta_l + eps xi_l per subset, deterministically.

    Noise is drawn only on indices actually read downstream: the union of the
    grid's weight supports, plus the truncated signal box when the subset is
    active.  Each subset owns a substream keyed by (seed, cycle, k, rank), so
    the values do not depend on which other subsets are in the stream.
    """
    dim = config.dim
    for subset in subsets:
        k = subset.k
        if k not in config.profiles:
            raise ValueError(f"config carries no grid for order k={k}")
        n = config.truncation[k]
        r2_union = max(float(p.rho[-1]) for p in config.profiles[k]) + 0.5
        coords, _ = ball_coords(k, r2_union, cap=cap)
        table = _signal_table(pattern, subset, n)
        index_list: list[tuple[int, ...]] = [tuple(int(v) for v in row) for row in coords]
        if table is not None:
            box = table.box_size()
            if box > cap:
                raise CapacityError(
                    f"signal box for {subset} holds {box} indices, exceeding cap {cap}"
                )
            ball_set = set(index_list)
            extras = [c for c, _ in table.items(cap=cap) if c not in ball_set]
            index_list = sorted(index_list + extras)
        rng = observation_stream(seed, cycle, k, subset_rank(subset, dim.d))
        noise = rng.standard_normal(len(index_list))
        values: dict[tuple[int, ...], float] = {}
        if table is None:
            for coords_i, xi in zip(index_list, noise):
                values[coords_i] = dim.epsilon * float(xi)
        else:
            for coords_i, xi in zip(index_list, noise):
                values[coords_i] = table.value(coords_i) + dim.epsilon * float(xi)
        yield Observation(owner=subset, values=values, epsilon=dim.epsilon, truncation_n=n)


def statistic_S(obs: Observation, w: WeightProfile) -> float:
    """Weighted chi-square statistic sum omega_l ((X_l/eps)^2 - 1)."""
    inv_eps = 1.0 / obs.epsilon
    table = w.as_table()
    x = np.empty(len(table))
    wv = np.empty(len(table))
    for i, (coords, omega) in enumerate(table.items()):
        try:
            x[i] = obs.values[coords]
        except KeyError:
            raise ValueError(
                f"observation for {obs.owner} is missing index {coords}; "
                f"truncation n={obs.truncation_n} does not cover the weight support"
            ) from None
        wv[i] = omega
    return float(np.dot(wv, (x * inv_eps) ** 2 - 1.0))


@dataclass(frozen=True)
class SubsetDecision:
    stats: tuple[float, ...]
    selected: bool
    argmax: int | None  # 1-based grid index m of the largest statistic


@dataclass(eq=False)
class SelectionResult:
    """Selector output: per-subset indicators with all M statistics recorded."""

    decisions: dict[Subset, SubsetDecision]
    thresholds: Mapping[int, float]

    def eta_hat(self, subset: Subset) -> int:
        return int(self.decisions[subset].selected)

    def selected_subsets(self) -> list[Subset]:
        return [u for u, dec in self.decisions.items() if dec.selected]


def select(
    observations: Iterable[Observation],
    config: SelectorConfig,
) -> SelectionResult:
    """Apply the adaptive selector to a stream of observations.

    eta_hat(u) = 1 iff max_m S_{u,m} > t_k.  An empty grid selects nothing.
    """
    decisions: dict[Subset, SubsetDecision] = {}
    for obs in observations:
        k = obs.owner.k
        profiles = config.profiles.get(k, ())
        stats = tuple(statistic_S(obs, p) for p in profiles)
        t_k = config.thresholds.get(k, math.inf)
        if stats and max(stats) > t_k:
            decisions[obs.owner] = SubsetDecision(
                stats=stats, selected=True, argmax=int(np.argmax(stats)) + 1
            )
        else:
            decisions[obs.owner] = SubsetDecision(stats=stats, selected=False, argmax=None)
    return SelectionResult(decisions=decisions, thresholds=dict(config.thresholds))


# ---------------------------------------------------------------------------
# Shell-level sampling (sufficient statistics for radial weights)
# ---------------------------------------------------------------------------

def null_shell_draw(rng: np.random.Generator, counts: np.ndarray, size: int) -> np.ndarray:
    """Draw Q_rho = chi2(N_rho) - N_rho for each shell; rows are replicates.

    Because every weight is constant on a squared-norm shell, the statistic
    depends on the noise only through per-shell sums of xi^2; sampling those
    directly is distributionally identical to per-index noise and far cheaper.
    """
    df = counts.astype(np.float64)
    if np.all(counts == 2):  # k = 1 shells; chi2_2 is a doubled exponential
        q = 2.0 * rng.standard_exponential(size=(size, len(counts)))
    else:
        q = np.zeros((size, len(counts)))
        pos = df > 0  # shells fully occupied by signal points have no null mass
        q[:, pos] = rng.chisquare(df[pos], size=(size, int(pos.sum())))
    return q - df


@dataclass(frozen=True)
class TailAudit:
    """Empirical tail frequencies of a null statistic against exp(-T^2/2)."""

    T: float
    trials: int
    empirical_upper: float
    reference: float
    max_weight: float
    regime_ok: bool
    empirical_lower: float | None = None
    signal_mean: float | None = None


def tail_bound_audit(
    T: float,
    trials: int,
    seed: int,
    w: WeightProfile,
    signal: CoefficientTable | None = None,
    chunk: int = 20_000,
) -> TailAudit:
    """Estimate P0(S > T) and compare with exp(-T^2/2).

    The bound is asymptotic and only meaningful while T * max omega stays
    small; outside that regime the report carries a warning flag rather than
    failing.  With a signal table supplied, the lower-tail analogue
    P_theta(S - E S <= -T) is estimated as well.
    """
    if T < 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    regime_ok = T * w.max_weight <= 0.1
    reference = math.exp(-T * T / 2.0)

    mu = None
    shell_pos = None
    signal_mean = None
    counts = w.counts
    if signal is not None:
        coords, rho = ball_coords(w.k, float(w.rho[-1]) + 0.5)
        theta = np.array([signal.value(tuple(int(v) for v in row)) for row in coords])
        nz = theta != 0.0
        coords, rho, theta = coords[nz], rho[nz], theta[nz]
        shell_pos = np.searchsorted(w.rho, rho)
        mu = theta / w.epsilon
        counts = w.counts.copy()
        np.subtract.at(counts, shell_pos, 1)  # remove signal points from null shells
        if np.any(counts < 0):
            raise ValueError("signal table repeats lattice points")
        signal_mean = float(np.dot(w.values[shell_pos], mu**2))

    upper_hits = 0
    lower_hits = 0
    done = 0
    idx = 0
    while done < trials:
        size = min(chunk, trials - done)
        rng = audit_stream(seed, idx)
        q = null_shell_draw(rng, counts, size)
        s = q @ w.values
        if mu is not None:
            xi = rng.standard_normal(size=(size, len(mu)))
            contrib = (mu[None, :] + xi) ** 2 - 1.0
            s = s + contrib @ w.values[shell_pos]
            lower_hits += int(np.count_nonzero(s - signal_mean <= -T))
        upper_hits += int(np.count_nonzero(s > T))
        done += size
        idx += 1
    return TailAudit(
        T=T,
        trials=trials,
        empirical_upper=upper_hits / trials,
        reference=reference,
        max_weight=w.max_weight,
        regime_ok=regime_ok,
        empirical_lower=(lower_hits / trials) if mu is not None else None,
        signal_mean=signal_mean,
    )
