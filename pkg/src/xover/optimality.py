"""A-, D- and E-criteria from information eigenvalues, efficiencies, parameter
sweeps, and design search over the binary class with p = t.

For a design with positive block eigenvalues ``zeta_{k,1} <= ... <= zeta_{k,t-1}``:

* ``phiA = sum_k sum_w sigma_k^2 / zeta_{k,w}``
* ``logPhiD = sum_k sum_w log(sigma_k^2 / zeta_{k,w})``
* ``phiE = max_k sigma_k^2 / zeta_{k,1}``

Smaller is better for all three. A design whose block for some response
has fewer than ``t - 1`` positive eigenvalues gets ``+inf`` everywhere.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from ._backend import block_spectra
from .design import (
    Design,
    OaSpec,
    all_permutations,
    construct_oa,
    counts_to_design,
    design_to_counts,
    ENUMERATION_CAP,
    _check_enum,
    serialize_design,
)
from .errors import ConstructionError, EstimabilityError, ValidationError
from .information import info_matrix, oa_closed_form, zero_floor
from .linalg import DEFAULT_TOL, Tolerances
from .model import StudyConfig, v_star

__all__ = [
    "CriteriaValues",
    "EfficiencyRow",
    "SweepResult",
    "SearchResult",
    "CRITERIA",
    "REFERENCE_MODES",
    "criteria",
    "criteria_from_zetas",
    "batch_criteria",
    "efficiency",
    "reference_oa",
    "default_r_grid",
    "sweep",
    "exhaustive_search",
    "exchange_search",
    "worker_count",
]

CRITERIA = ("A", "D", "E")
REFERENCE_MODES = ("direct", "closed-form", "closed-form-unscaled-q22")
TIE_RTOL = 1e-9
CHUNK = 4096


@dataclass(frozen=True)
class CriteriaValues:
    phiA: float
    logPhiD: float
    phiE: float
    per_block_zetas: tuple[NDArray[np.float64], ...]
    estimable: bool

    @property
    def phiD(self) -> float:
        return math.exp(self.logPhiD) if self.estimable else math.inf

    def value(self, criterion: str) -> float:
        return {"A": self.phiA, "D": self.logPhiD, "E": self.phiE}[_crit(criterion)]


@dataclass(frozen=True)
class EfficiencyRow:
    r: float | None
    effA: float
    effD: float
    effE: float
    estimable: bool = True


@dataclass(frozen=True)
class SweepResult:
    rows: list[EfficiencyRow]
    skipped: list[float]
    summary: dict[str, float | int | None]


@dataclass(frozen=True)
class SearchResult:
    best_design: Design | None
    best_value: float
    criterion: str
    evaluated: int
    optima_set: list[Design] = field(default_factory=list)

    @property
    def finite(self) -> bool:
        return self.best_design is not None


def _crit(c: str) -> str:
    c = c.upper()
    if c not in CRITERIA:
        raise ValidationError(f"criterion must be one of {CRITERIA}, got {c!r}")
    return c


def worker_count() -> int:
    """Worker threads from ``XOVER_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("XOVER_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"XOVER_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValidationError("XOVER_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def criteria_from_zetas(
    zetas: Sequence[NDArray[np.float64]],
    sigma2s: Sequence[float],
    estimable: Sequence[bool],
) -> CriteriaValues:
    zetas = tuple(np.sort(np.asarray(z, dtype=float)) for z in zetas)
    if not all(estimable):
        return CriteriaValues(math.inf, math.inf, math.inf, zetas, False)
    eta = [s2 / z for z, s2 in zip(zetas, sigma2s)]
    return CriteriaValues(
        phiA=float(sum(e.sum() for e in eta)),
        logPhiD=float(sum(np.log(e).sum() for e in eta)),
        phiE=float(max(e.max() for e in eta)),
        per_block_zetas=zetas,
        estimable=True,
    )


def criteria(d: Design, cfg: StudyConfig, tol: Tolerances = DEFAULT_TOL) -> CriteriaValues:
    info = info_matrix(d, cfg, tol)
    return criteria_from_zetas(
        [b.positive_eigs for b in info.blocks], info.sigma2s, [b.estimable for b in info.blocks]
    )


def _closed_form_criteria(d: Design, cfg: StudyConfig, tol: Tolerances, scaled: bool) -> CriteriaValues:
    zetas = []
    for v in cfg.covariances(d.p, tol):
        _, q = oa_closed_form(d, v, tol, scaled_denominator=scaled)
        zetas.append(np.full(d.t - 1, q.factor))
    return criteria_from_zetas(zetas, cfg.sigma2s, [z[0] > 0 for z in zetas])


def _reference_criteria(dstar: Design, cfg: StudyConfig, tol: Tolerances, reference: str) -> CriteriaValues:
    if reference == "direct":
        return criteria(dstar, cfg, tol)
    if reference == "closed-form":
        return _closed_form_criteria(dstar, cfg, tol, scaled=True)
    if reference == "closed-form-unscaled-q22":
        return _closed_form_criteria(dstar, cfg, tol, scaled=False)
    raise ValidationError(f"reference must be one of {REFERENCE_MODES}, got {reference!r}")


def _ratios(ref: CriteriaValues, c0: CriteriaValues, r: float | None) -> EfficiencyRow:
    if not ref.estimable:
        raise EstimabilityError("reference design is not estimable")
    if not c0.estimable:
        return EfficiencyRow(r, 0.0, 0.0, 0.0, estimable=False)
    return EfficiencyRow(
        r,
        ref.phiA / c0.phiA,
        math.exp(ref.logPhiD - c0.logPhiD),
        ref.phiE / c0.phiE,
    )


def efficiency(
    d0: Design,
    dstar: Design,
    cfg: StudyConfig,
    tol: Tolerances = DEFAULT_TOL,
    reference: str = "direct",
    r: float | None = None,
) -> EfficiencyRow:
    """A-, D-, E-efficiency of ``d0`` relative to ``dstar``: ``phi(dstar) / phi(d0)``.

    ``reference`` selects how the reference criteria are computed:
    ``"direct"`` from the design's information matrix, ``"closed-form"``
    from the orthogonal-array closed form (identical for OA designs), or
    ``"closed-form-unscaled-q22"`` from the closed form with the bare
    ``q22`` denominator. The D ratio is the ratio of determinant products.
    """
    if (d0.t, d0.p, d0.n) != (dstar.t, dstar.p, dstar.n):
        raise ValidationError(
            f"designs differ in shape: (t,p,n)={(d0.t, d0.p, d0.n)} vs {(dstar.t, dstar.p, dstar.n)}"
        )
    return _ratios(_reference_criteria(dstar, cfg, tol, reference), criteria(d0, cfg, tol), r)


def reference_oa(d0: Design) -> Design:
    """OA_I design matching ``d0``'s t and n (p must equal t)."""
    if d0.p != d0.t:
        raise ConstructionError(f"reference OA needs p == t (got p={d0.p}, t={d0.t})")
    per = d0.t * (d0.t - 1)
    if d0.n % per:
        raise ConstructionError(f"n={d0.n} is not a multiple of t(t-1)={per}; no OA_I with matching n")
    return construct_oa(OaSpec(d0.t, d0.n // per))


def default_r_grid(r_min: float = -0.45, r_max: float = 0.95, steps: int = 141) -> list[float]:
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if steps == 1:
        return [float(r_min)]
    return [float(x) for x in np.round(np.linspace(r_min, r_max, steps), 12)]


def sweep(
    d0: Design,
    dstar: Design,
    base_cfg: StudyConfig,
    r_grid: Iterable[float],
    tol: Tolerances = DEFAULT_TOL,
    reference: str = "direct",
) -> SweepResult:
    """Efficiency of ``d0`` along a grid of the shared correlation parameter r.

    Every AR(1) and equi-correlated response receives the same r. Grid
    points outside any family's admissible range are skipped and listed.
    """
    rows, skipped = [], []
    for r in sorted(float(x) for x in r_grid):
        if not base_cfg.admits_r(r, d0.p):
            skipped.append(r)
            continue
        rows.append(efficiency(d0, dstar, base_cfg.with_r(r), tol, reference, r=r))
    summary: dict[str, float | int | None] = {}
    for name, attr in (("A", "effA"), ("D", "effD"), ("E", "effE")):
        if rows:
            best = max(rows, key=lambda row: getattr(row, attr))
            summary[f"max{name}"] = getattr(best, attr)
            summary[f"argmax{name}"] = best.r
        else:
            summary[f"max{name}"] = summary[f"argmax{name}"] = None
    summary["skipped"] = len(skipped)
    return SweepResult(rows=rows, skipped=skipped, summary=summary)


# -- batched evaluation over multiplicity vectors ---------------------------------

@dataclass(frozen=True)
class _Prepared:
    t: int
    n: int
    seqs: NDArray[np.int64]
    sigma2s: tuple[float, ...]
    vstars: tuple[NDArray[np.float64], ...]
    block_of: tuple[int, ...]  # response -> index into vstars
    tol: Tolerances


def _prepare(t: int, n: int, cfg: StudyConfig, tol: Tolerances) -> _Prepared:
    seqs = np.array(all_permutations(t), dtype=np.int64) - 1
    vstars: list[NDArray] = []
    keys: dict[bytes, int] = {}
    block_of = []
    for v in cfg.covariances(t, tol):
        key = v.tobytes()
        if key not in keys:
            keys[key] = len(vstars)
            vstars.append(v_star(v, tol))
        block_of.append(keys[key])
    return _Prepared(t, n, seqs, tuple(cfg.sigma2s), tuple(vstars), tuple(block_of), tol)


def _batch(prep: _Prepared, counts: NDArray[np.int64]) -> dict[str, NDArray]:
    t, tol = prep.t, prep.tol
    spectra = [
        block_spectra(prep.seqs, counts, vs, t, tol.eig_tol, zero_floor(prep.n, vs)) for vs in prep.vstars
    ]
    n_des = counts.shape[0]
    phi_a = np.zeros(n_des)
    log_d = np.zeros(n_des)
    phi_e = np.zeros(n_des)
    ok = np.ones(n_des, dtype=bool)
    for s2, b in zip(prep.sigma2s, prep.block_of):
        w = spectra[b]
        cut = tol.eig_tol * np.maximum(np.max(np.abs(w), axis=1), zero_floor(prep.n, prep.vstars[b]))
        ok &= np.sum(w > cut[:, None], axis=1) == t - 1
        z = np.where(w[:, 1:] > 0, w[:, 1:], np.nan)
        eta = s2 / z
        phi_a += eta.sum(axis=1)
        with np.errstate(invalid="ignore"):
            log_d += np.log(eta).sum(axis=1)
        phi_e = np.maximum(phi_e, eta[:, 0])
    for arr in (phi_a, log_d, phi_e):
        arr[~ok] = np.inf
    return {"A": phi_a, "D": log_d, "E": phi_e, "estimable": ok}


def batch_criteria(counts: NDArray[np.int64], t: int, cfg: StudyConfig, tol: Tolerances = DEFAULT_TOL) -> dict[str, NDArray]:
    """Criteria for many designs given as multiplicity vectors over ``all_permutations(t)``.

    Returns arrays ``"A"``, ``"D"`` (log form), ``"E"`` and ``"estimable"``.
    All rows must have the same subject count.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    sizes = counts.sum(axis=1)
    if counts.shape[1] != math.factorial(t) or np.any(sizes != sizes[0]) or sizes[0] < 1:
        raise ValidationError("counts must be rows over the t! permutations with a common positive total")
    return _batch(_prepare(t, int(sizes[0]), cfg, tol), counts)


def _chunks(t: int, n: int) -> Iterable[NDArray[np.int64]]:
    k = math.factorial(t)
    it = itertools.combinations_with_replacement(range(k), n)
    while True:
        block = list(itertools.islice(it, CHUNK))
        if not block:
            return
        arr = np.zeros((len(block), k), dtype=np.int64)
        idx = np.array(block, dtype=np.int64)
        np.add.at(arr, (np.repeat(np.arange(len(block)), n), idx.reshape(-1)), 1)
        yield arr


def _within(values: NDArray, best: float, criterion: str) -> NDArray[np.bool_]:
    if criterion == "D":
        return np.abs(values - best) <= TIE_RTOL
    return np.abs(values - best) <= TIE_RTOL * abs(best)


def _pick(designs: list[Design]) -> Design:
    return min(designs, key=serialize_design)


def exhaustive_search(
    t: int,
    n: int,
    cfg: StudyConfig,
    criterion: str = "A",
    tol: Tolerances = DEFAULT_TOL,
    cap: int = ENUMERATION_CAP,
) -> SearchResult:
    """Evaluate every binary design with p = t and n subjects.

    The best design is the lexicographically smallest serialized layout
    among all designs within ``1e-9`` (relative; absolute on the log scale
    for D) of the minimum.
    """
    criterion = _crit(criterion)
    total = _check_enum(t, n, cap)
    prep = _prepare(t, n, cfg, tol)
    chunks = list(_chunks(t, n))
    with ThreadPoolExecutor(max_workers=min(worker_count(), max(len(chunks), 1))) as pool:
        results = list(pool.map(lambda c: _batch(prep, c)[criterion], chunks))
    values = np.concatenate(results)
    all_counts = np.concatenate(chunks)
    assert values.size == total
    best = float(np.min(values))
    if not np.isfinite(best):
        return SearchResult(None, math.inf, criterion, total, [])
    tie = np.flatnonzero(_within(values, best, criterion))
    optima = [counts_to_design(all_counts[i], t) for i in tie]
    return SearchResult(_pick(optima), best, criterion, total, optima)


def exchange_search(
    t: int,
    n: int,
    cfg: StudyConfig,
    criterion: str = "A",
    restarts: int = 10,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOL,
    start: Design | None = None,
    max_steps: int = 10_000,
) -> SearchResult:
    """Steepest-descent column exchange over multisets of permutation sequences.

    Each step evaluates every replacement of one present sequence by any
    other of the ``t!`` sequences and takes the best strict improvement
    (relative ``1e-9``). Restarts draw random multisets from a
    ``numpy.random.default_rng(seed)`` stream; ``start`` adds one extra
    run from a given design. Only local optimality is guaranteed.
    """
    criterion = _crit(criterion)
    if t < 3:
        raise ValidationError(f"the binary class is defined for t >= 3, got {t}")
    if n < 1:
        raise ValidationError(f"need n >= 1 subjects, got {n}")
    prep = _prepare(t, n, cfg, tol)
    k = math.factorial(t)
    rng = np.random.default_rng(seed)
    starts = []
    if start is not None:
        if (start.t, start.p, start.n) != (t, t, n):
            raise ValidationError("start design does not match (t, p=t, n)")
        starts.append(design_to_counts(start))
    for _ in range(restarts):
        starts.append(np.bincount(rng.integers(0, k, size=n), minlength=k))

    evaluated = 0
    finals: list[tuple[float, NDArray[np.int64]]] = []
    for counts in starts:
        counts = counts.astype(np.int64)
        cur = float(_batch(prep, counts[None, :])[criterion][0])
        evaluated += 1
        for _ in range(max_steps):
            present = np.flatnonzero(counts)
            moves = np.array([(s, u) for s in present for u in range(k) if u != s], dtype=np.int64)
            cand = np.repeat(counts[None, :], len(moves), axis=0)
            cand[np.arange(len(moves)), moves[:, 0]] -= 1
            cand[np.arange(len(moves)), moves[:, 1]] += 1
            vals = _batch(prep, cand)[criterion]
            evaluated += len(moves)
            j = int(np.argmin(vals))
            if not np.isfinite(vals[j]):
                break
            gain = cur - vals[j]
            thresh = TIE_RTOL if criterion == "D" else TIE_RTOL * abs(cur)
            if not np.isfinite(cur) or gain > thresh:
                counts, cur = cand[j], float(vals[j])
            else:
                break
        finals.append((cur, counts))

    best = min(v for v, _ in finals)
    if not np.isfinite(best):
        return SearchResult(None, math.inf, criterion, evaluated, [])
    seen: dict[bytes, Design] = {}
    for v, c in finals:
        if _within(np.array([v]), best, criterion)[0]:
            seen.setdefault(c.tobytes(), counts_to_design(c, t))
    optima = list(seen.values())
    return SearchResult(_pick(optima), best, criterion, evaluated, optima)
