"""Test-function bank, numerical Fourier analysis, and sparsity patterns.

Nine centred functions g_1..g_9 on [0, 1] generate the active components as
tensor products g_{j_1}(t_{j_1}) * ... * g_{j_k}(t_{j_k}).  Coefficients on
the trigonometric basis

    phi_0 = 1,  phi_l = sqrt(2) cos(2 pi l t),  phi_{-l} = sqrt(2) sin(2 pi l t)

are computed by composite Gauss-Legendre quadrature (the integrands are smooth
but not periodic, so panel quadrature beats trapezoid here) and cached per
(function, truncation, rule).  Product tables are kept in factored form: a
k-variate table stores its k coefficient vectors and evaluates entries on
demand, which keeps order-4 boxes (72^4 entries) out of memory.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Iterator, TextIO

import numpy as np

from .errors import CapacityError
from .lattice import DEFAULT_POINT_CAP, DimensionSpec, Subset

SQRT2 = math.sqrt(2.0)


def _g1(t):
    return t**2 * (2 ** (t - 1.0) - (t - 0.5) ** 2) * np.exp(t) - 0.5424


def _g2(t):
    return t**2 * (2 ** (t - 1.0) - (t - 1.0) ** 5) - 0.2887


def _g3(t):
    return 1.5 * t**2 * 2 ** (t - 1.0) * np.cos(15.0 * t) - 0.05011


def _g4(t):
    return t - 0.5


def _g5(t):
    return 5.0 * (t - 0.7) ** 3 + 0.29


def _g6(t):
    return 2.0 * (t - 0.4) ** 2 - 0.1867


def _g7(t):
    return 0.7 * (t**2 - 0.1) ** 3 - 0.0643


def _g8(t):
    return 10.0 * (t**2 - 0.5) ** 5 + 0.068


def _g9(t):
    return 3.0 * (t - 0.8) ** 4 - 0.1968


_G_FUNCS = (_g1, _g2, _g3, _g4, _g5, _g6, _g7, _g8, _g9)
N_FACTORS = len(_G_FUNCS)


def eval_g(i: int, t):
    """Evaluate g_i on scalars or arrays of points in [0, 1]."""
    if not 1 <= i <= N_FACTORS:
        raise ValueError(f"factor id must lie in [1, {N_FACTORS}], got {i}")
    arr = np.asarray(t, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    out = _G_FUNCS[i - 1](arr)
    return float(out) if np.isscalar(t) or arr.ndim == 0 else out


def basis_phi(l: int, t):
    """Trigonometric basis function phi_l on [0, 1]."""
    arr = np.asarray(t, dtype=np.float64)
    if l == 0:
        out = np.ones_like(arr)
    elif l > 0:
        out = SQRT2 * np.cos(2.0 * math.pi * l * arr)
    else:
        out = SQRT2 * np.sin(2.0 * math.pi * (-l) * arr)
    return float(out) if arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on [0, 1]: `panels` panels of `nodes` points."""

    panels: int = 64
    nodes: int = 16

    def __post_init__(self):
        if self.panels < 1 or self.nodes < 2:
            raise ValueError(f"invalid quadrature spec {self.panels}x{self.nodes}")

    @property
    def total_nodes(self) -> int:
        return self.panels * self.nodes

    @property
    def signature(self) -> str:
        return f"gl{self.nodes}x{self.panels}"

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        return _quad_grid(self)


_GRID_CACHE: dict[str, tuple[np.ndarray, np.ndarray]] = {}


def _quad_grid(spec: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    cached = _GRID_CACHE.get(spec.signature)
    if cached is not None:
        return cached
    xg, wg = np.polynomial.legendre.leggauss(spec.nodes)
    width = 1.0 / spec.panels
    starts = np.arange(spec.panels) * width
    x = (starts[:, None] + (xg[None, :] + 1.0) * (width / 2.0)).ravel()
    w = np.tile(wg * (width / 2.0), spec.panels)
    _GRID_CACHE[spec.signature] = (x, w)
    return x, w


DEFAULT_QUADRATURE = QuadratureSpec()


def quadrature_for(max_abs_l: int) -> QuadratureSpec:
    """Rule resolving frequencies up to ``max_abs_l`` to ~1e-12 absolute."""
    need = max(64, -(-(2 * max_abs_l + 16) // 16), -(-max_abs_l // 2))
    return QuadratureSpec(panels=need, nodes=16)


_COEFF_LOCK = threading.Lock()
_SCALAR_CACHE: dict[tuple[int, int, str], float] = {}
_VECTOR_CACHE: dict[tuple[int, int, str], np.ndarray] = {}


def fourier_coeff_1d(i: int, l: int, quad: QuadratureSpec | None = None) -> float:
    """Coefficient (g_i, phi_l) = integral of g_i(t) phi_l(t) dt on [0, 1].

    With ``quad=None`` a rule scaled to |l| is chosen automatically; an explicit
    rule must carry at least 2|l| + 16 nodes to resolve the oscillation.
    """
    if quad is None:
        quad = quadrature_for(abs(l))
    elif quad.total_nodes < 2 * abs(l) + 16:
        raise ValueError(
            f"quadrature {quad.signature} has {quad.total_nodes} nodes; "
            f"frequency l={l} needs at least {2 * abs(l) + 16}"
        )
    key = (i, l, quad.signature)
    hit = _SCALAR_CACHE.get(key)
    if hit is not None:
        return hit
    x, w = quad.grid()
    value = float(np.dot(w, eval_g(i, x) * basis_phi(l, x)))
    with _COEFF_LOCK:
        _SCALAR_CACHE[key] = value
    return value


def coeff_vector(i: int, n: int, quad: QuadratureSpec | None = None) -> np.ndarray:
    """All coefficients (g_i, phi_l) for l = -n..n, as an array indexed by l + n.

    The l = 0 slot holds the mean residual of g_i; lattice consumers mask it.
    Results are cached per (i, n, rule signature).
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if quad is None:
        quad = quadrature_for(n)
    elif quad.total_nodes < 2 * n + 16:
        raise ValueError(
            f"quadrature {quad.signature} has {quad.total_nodes} nodes; "
            f"truncation n={n} needs at least {2 * n + 16}"
        )
    key = (i, n, quad.signature)
    hit = _VECTOR_CACHE.get(key)
    if hit is not None:
        return hit
    x, w = quad.grid()
    g = eval_g(i, x) * w
    ls = np.arange(1, n + 1)
    phase = 2.0 * math.pi * np.outer(ls, x)
    out = np.empty(2 * n + 1, dtype=np.float64)
    out[n] = float(g.sum())
    out[n + 1 :] = SQRT2 * (np.cos(phase) @ g)
    out[n - 1 :: -1] = SQRT2 * (np.sin(phase) @ g)
    out.setflags(write=False)
    with _COEFF_LOCK:
        _VECTOR_CACHE[key] = out
    return out


@dataclass(frozen=True)
class OrthogonalityResult:
    factor: int
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tol


def orthogonality_check(i: int, tol: float) -> OrthogonalityResult:
    """Zero-mean check |integral g_i| <= tol (products inherit it per factor)."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    residual = abs(fourier_coeff_1d(i, 0))
    return OrthogonalityResult(factor=i, residual=residual, tol=tol)


# ---------------------------------------------------------------------------
# Components and coefficient tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComponentSpec:
    """One active component: a subset, factor ids g_i per coordinate, amplitude."""

    subset: Subset
    factor_ids: tuple[int, ...]
    amplitude: float = 1.0

    def __post_init__(self):
        ids = tuple(int(i) for i in self.factor_ids)
        object.__setattr__(self, "factor_ids", ids)
        if len(ids) != self.subset.k:
            raise ValueError(
                f"component for {self.subset} needs {self.subset.k} factor ids, got {ids}"
            )
        if any(not 1 <= i <= N_FACTORS for i in ids):
            raise ValueError(f"factor ids must lie in [1, {N_FACTORS}], got {ids}")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")

    def scaled(self, alpha: float) -> "ComponentSpec":
        return ComponentSpec(self.subset, self.factor_ids, self.amplitude * alpha)


def product_coeff(spec: ComponentSpec, coords, quad: QuadratureSpec | None = None) -> float:
    """Tensor-product coefficient: amplitude * prod_p (g_{f_p}, phi_{l_p})."""
    coords = tuple(int(v) for v in coords)
    if len(coords) != spec.subset.k:
        raise ValueError(
            f"index arity {len(coords)} does not match subset order {spec.subset.k}"
        )
    value = spec.amplitude
    for fid, l in zip(spec.factor_ids, coords):
        value *= fourier_coeff_1d(fid, l, quad=quad)
    return value


@dataclass(eq=False)
class CoefficientTable:
    """Fourier coefficients of one component over the box |l_j| <= n, l_j != 0.

    Product components are stored in factored form (one vector per coordinate);
    explicit tables carry a plain dict.  Entry iteration materialises points
    lazily and is guarded by a point budget.
    """

    owner: Subset
    n: int
    amplitude: float = 1.0
    factors: tuple[np.ndarray, ...] | None = None
    entries: dict[tuple[int, ...], float] | None = None

    @classmethod
    def from_component(
        cls, comp: ComponentSpec, n: int, quad: QuadratureSpec | None = None
    ) -> "CoefficientTable":
        vecs = tuple(coeff_vector(fid, n, quad=quad) for fid in comp.factor_ids)
        return cls(owner=comp.subset, n=n, amplitude=comp.amplitude, factors=vecs)

    @classmethod
    def from_entries(
        cls, owner: Subset, entries: dict[tuple[int, ...], float], n: int | None = None
    ) -> "CoefficientTable":
        clean = {}
        for coords, theta in entries.items():
            coords = tuple(int(v) for v in coords)
            if len(coords) != owner.k or any(v == 0 for v in coords):
                raise ValueError(f"invalid frequency index {coords} for subset {owner}")
            clean[coords] = float(theta)
        box = n if n is not None else max(
            (max(abs(v) for v in c) for c in clean), default=1
        )
        return cls(owner=owner, n=box, amplitude=1.0, entries=clean)

    @property
    def k(self) -> int:
        return self.owner.k

    def value(self, coords) -> float:
        coords = tuple(int(v) for v in coords)
        if len(coords) != self.k or any(v == 0 for v in coords):
            raise ValueError(f"invalid frequency index {coords}")
        if any(abs(v) > self.n for v in coords):
            return 0.0
        if self.entries is not None:
            return self.entries.get(coords, 0.0)
        value = self.amplitude
        for vec, l in zip(self.factors, coords):
            value *= vec[l + self.n]
        return float(value)

    def box_size(self) -> int:
        return (2 * self.n) ** self.k if self.factors is not None else len(self.entries)

    def items(self, cap: int = DEFAULT_POINT_CAP) -> Iterator[tuple[tuple[int, ...], float]]:
        if self.entries is not None:
            yield from self.entries.items()
            return
        if self.box_size() > cap:
            raise CapacityError(
                f"coefficient box for {self.owner} holds {self.box_size()} entries, "
                f"exceeding cap {cap}"
            )
        axis = [l for l in range(-self.n, self.n + 1) if l != 0]
        for coords in itertools.product(axis, repeat=self.k):
            yield coords, self.value(coords)

    def _masked_factors(self) -> tuple[np.ndarray, ...]:
        out = []
        for vec in self.factors:
            v = vec.copy()
            v[self.n] = 0.0  # exclude l = 0 from lattice sums
            out.append(v)
        return tuple(out)

    def l2_norm_sq(self) -> float:
        """sum theta^2 over the table."""
        if self.entries is not None:
            return float(sum(t * t for t in self.entries.values()))
        total = self.amplitude**2
        for v in self._masked_factors():
            total *= float(np.dot(v, v))
        return total

    def sobolev_norm(self, sigma: float, cap: int = DEFAULT_POINT_CAP) -> float:
        """Truncated squared semi-norm sum theta^2 c^2, c^2 = (sum (2 pi l_j)^2)^sigma.

        For factored tables with sigma = 1 the sum separates across coordinates
        and is evaluated in closed form; other cases iterate entries.
        """
        if self.entries is not None or sigma != 1.0:
            return float(
                sum(t * t * sobolev_coeff_sq(c, sigma) for c, t in self.items(cap=cap))
            )
        masked = self._masked_factors()
        ls = np.arange(-self.n, self.n + 1, dtype=np.float64)
        w2 = (2.0 * math.pi * ls) ** 2
        mass = [float(np.dot(v, v)) for v in masked]
        bent = [float(np.dot(w2, v * v)) for v in masked]
        total = 0.0
        for j in range(self.k):
            term = bent[j]
            for i in range(self.k):
                if i != j:
                    term *= mass[i]
            total += term
        return self.amplitude**2 * total

    def export(self, fp: TextIO, min_abs: float = 0.0, cap: int = DEFAULT_POINT_CAP) -> int:
        """Write text records ``subset; l_1 .. l_k; theta``; returns row count."""
        written = 0
        subset_txt = " ".join(str(i) for i in self.owner.indices)
        for coords, theta in self.items(cap=cap):
            if abs(theta) < min_abs:
                continue
            coord_txt = " ".join(str(v) for v in coords)
            fp.write(f"{subset_txt}; {coord_txt}; {theta:.12g}\n")
            written += 1
        return written


def sobolev_coeff_sq(coords, sigma: float) -> float:
    rho = sum(int(v) * int(v) for v in coords)
    return (4.0 * math.pi * math.pi * rho) ** sigma


def sobolev_norm(table: CoefficientTable, sigma: float) -> float:
    """Module-level alias for :meth:`CoefficientTable.sobolev_norm`."""
    return table.sobolev_norm(sigma)


# ---------------------------------------------------------------------------
# Sparsity patterns
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SparsityPattern:
    """Active components per order, with activity indicators for any subset."""

    d: int
    s: int
    beta: float | None
    components: dict[int, tuple[ComponentSpec, ...]]
    _active: dict[int, frozenset[Subset]] = field(init=False, repr=False)

    def __post_init__(self):
        active: dict[int, frozenset[Subset]] = {}
        for k, comps in self.components.items():
            subsets = [c.subset for c in comps]
            if len(set(subsets)) != len(subsets):
                raise ValueError(f"duplicate active subsets at order {k}")
            for c in comps:
                if c.subset.k != k:
                    raise ValueError(f"component {c.subset} filed under order {k}")
                if c.subset.indices[-1] > self.d:
                    raise ValueError(f"subset {c.subset} exceeds dimension d={self.d}")
            active[k] = frozenset(subsets)
        self._active = active

    def active(self, k: int) -> tuple[ComponentSpec, ...]:
        return self.components.get(k, ())

    def eta(self, subset: Subset) -> int:
        if subset.indices[-1] > self.d or subset.k > self.s:
            raise ValueError(f"subset {subset} outside the (d={self.d}, s={self.s}) universe")
        return int(subset in self._active.get(subset.k, frozenset()))

    def counts(self) -> dict[int, int]:
        return {k: len(self.components.get(k, ())) for k in range(1, self.s + 1)}

    def component_for(self, subset: Subset) -> ComponentSpec | None:
        for comp in self.components.get(subset.k, ()):
            if comp.subset == subset:
                return comp
        return None

    def with_attenuated(self, alpha: float, subset: Subset | None = None) -> "SparsityPattern":
        """Copy with one first-order component scaled by alpha (default: first)."""
        if not 0.0 < alpha:
            raise ValueError(f"alpha must be positive, got {alpha}")
        firsts = self.components.get(1, ())
        if not firsts:
            raise ValueError("pattern has no first-order component to attenuate")
        target = subset if subset is not None else firsts[0].subset
        found = False
        new_components = dict(self.components)
        scaled = []
        for comp in firsts:
            if comp.subset == target:
                scaled.append(comp.scaled(alpha))
                found = True
            else:
                scaled.append(comp)
        if not found:
            raise ValueError(f"subset {target} is not an active first-order component")
        new_components[1] = tuple(scaled)
        return SparsityPattern(d=self.d, s=self.s, beta=self.beta, components=new_components)


# Active subsets of the bundled order-4 benchmark; the factor id of every
# coordinate equals the coordinate itself (g_j acts on t_j throughout).
_BENCHMARK_DIMENSIONS = (50, 100, 200)


def _benchmark_active_indices(d: int) -> dict[int, list[tuple[int, ...]]]:
    table: dict[int, list[tuple[int, ...]]] = {
        1: [(1,), (2,)],
        2: [(1, 2), (2, 3), (3, 4)],
        3: [(1, 2, j) for j in (3, 4, 5, 6)],
        4: [(1, 2, 3, j) for j in (4, 5, 6, 7, 8)],
    }
    if d >= 100:
        table[3].append((1, 2, 7))
        table[4] += [(1, 2, 4, 8), (1, 2, 4, 9)]
    if d >= 200:
        table[3].append((1, 2, 8))
        table[4] += [(1, 2, 5, 7), (1, 2, 5, 8), (1, 2, 5, 9)]
    return table


def build_pattern(
    spec: DimensionSpec,
    mode: str = "benchmark",
    components: list[ComponentSpec] | None = None,
) -> SparsityPattern:
    """Assemble a sparsity pattern.

    ``benchmark`` reproduces the bundled bank's active subsets and factor
    assignments for d in {50, 100, 200} with s = 4, beta = 0.87.  ``explicit``
    accepts any list of components (possibly empty).
    """
    if mode == "benchmark":
        if spec.d not in _BENCHMARK_DIMENSIONS or spec.s != 4 or abs(spec.beta - 0.87) > 1e-12:
            raise ValueError(
                "benchmark pattern requires d in {50, 100, 200}, s = 4, "
                "beta = 0.87; use explicit mode for other configurations"
            )
        comp_map = {
            k: tuple(
                ComponentSpec(Subset(idx), factor_ids=idx) for idx in rows
            )
            for k, rows in _benchmark_active_indices(spec.d).items()
        }
        return SparsityPattern(d=spec.d, s=spec.s, beta=spec.beta, components=comp_map)
    if mode != "explicit":
        raise ValueError(f"mode must be 'benchmark' or 'explicit', got {mode!r}")
    comp_map2: dict[int, list[ComponentSpec]] = {}
    for comp in components or []:
        comp_map2.setdefault(comp.subset.k, []).append(comp)
    return SparsityPattern(
        d=spec.d,
        s=spec.s,
        beta=spec.beta,
        components={k: tuple(v) for k, v in comp_map2.items()},
    )
