"""Matrix ingredients of the fixed-effects multivariate crossover model.

Observations for one response are stacked subject-major, period-minor:
``(y_11, ..., y_p1, y_12, ..., y_pn)``. Every matrix here uses that order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .design import Design
from .errors import ValidationError
from .linalg import DEFAULT_TOL, Tolerances, as_matrix, centering_matrix, is_symmetric, kron, sym_eigen

__all__ = [
    "CovarianceSpec",
    "ResponseConfig",
    "StudyConfig",
    "BOUNDARY_MARGIN",
    "build_cov",
    "shift_matrix",
    "incidence_direct",
    "incidence_carry",
    "nuisance_block",
    "full_design_matrix",
    "v_star",
    "a_star",
    "load_config",
]

# parameters this close to a family's positive-definiteness boundary are rejected
BOUNDARY_MARGIN = 1e-6

_KINDS = ("ar1", "equicorr", "identity", "custom")


@dataclass(frozen=True)
class CovarianceSpec:
    """Within-subject covariance family; realized for a period count by :func:`build_cov`."""

    kind: str
    r: float | None = None
    matrix: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in _KINDS:
            raise ValidationError(f"unknown covariance type {self.kind!r}; expected one of {_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind in ("ar1", "equicorr"):
            if self.r is None:
                raise ValidationError(f"{kind} covariance needs a correlation r")
            object.__setattr__(self, "r", float(self.r))
        if kind == "custom":
            if self.matrix is None:
                raise ValidationError("custom covariance needs a matrix")
            m = as_matrix(self.matrix, "custom covariance")
            object.__setattr__(self, "matrix", tuple(tuple(float(x) for x in row) for row in m))

    @classmethod
    def ar1(cls, r: float) -> "CovarianceSpec":
        return cls("ar1", r=r)

    @classmethod
    def equicorr(cls, r: float) -> "CovarianceSpec":
        return cls("equicorr", r=r)

    @classmethod
    def identity(cls) -> "CovarianceSpec":
        return cls("identity")

    @classmethod
    def custom(cls, matrix: ArrayLike) -> "CovarianceSpec":
        return cls("custom", matrix=np.asarray(matrix, dtype=float).tolist())

    @property
    def has_r(self) -> bool:
        return self.kind in ("ar1", "equicorr")

    def r_range(self, p: int) -> tuple[float, float]:
        """Open interval of admissible r for ``p`` periods (shrunk by the boundary margin)."""
        if self.kind == "ar1":
            return -1.0 + BOUNDARY_MARGIN, 1.0 - BOUNDARY_MARGIN
        if self.kind == "equicorr":
            return -1.0 / (p - 1) + BOUNDARY_MARGIN, 1.0 - BOUNDARY_MARGIN
        return -np.inf, np.inf

    def with_r(self, r: float) -> "CovarianceSpec":
        return replace(self, r=float(r)) if self.has_r else self

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"type": self.kind}
        if self.has_r:
            out["r"] = self.r
        if self.kind == "custom":
            out["matrix"] = [list(row) for row in self.matrix]
        return out

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "CovarianceSpec":
        if "type" not in obj:
            raise ValidationError("covariance entry needs a 'type'")
        return cls(kind=str(obj["type"]), r=obj.get("r"), matrix=obj.get("matrix"))


@dataclass(frozen=True)
class ResponseConfig:
    sigma2: float
    cov: CovarianceSpec

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValidationError(f"sigma2 must be positive and finite, got {self.sigma2}")
        object.__setattr__(self, "sigma2", float(self.sigma2))


@dataclass(frozen=True)
class StudyConfig:
    """Per-response variance scales and within-subject covariances (g = len(responses))."""

    responses: tuple[ResponseConfig, ...] = field(default_factory=tuple)

    def __post_init__(self):
        resp = tuple(self.responses)
        if not resp:
            raise ValidationError("a study needs at least one response")
        object.__setattr__(self, "responses", resp)

    @classmethod
    def of(cls, *pairs: tuple[float, CovarianceSpec]) -> "StudyConfig":
        """Shorthand: ``StudyConfig.of((2.0, CovarianceSpec.ar1(0.3)), (1.0, ...))``."""
        return cls(tuple(ResponseConfig(s, c) for s, c in pairs))

    @property
    def g(self) -> int:
        return len(self.responses)

    @property
    def sigma2s(self) -> list[float]:
        return [r.sigma2 for r in self.responses]

    def covariances(self, p: int, tol: Tolerances = DEFAULT_TOL) -> list[NDArray[np.float64]]:
        return [build_cov(r.cov, p, tol) for r in self.responses]

    def with_r(self, r: float) -> "StudyConfig":
        """Set the shared correlation parameter on every AR(1) / equi-correlated response."""
        return StudyConfig(tuple(replace(x, cov=x.cov.with_r(r)) for x in self.responses))

    def admits_r(self, r: float, p: int) -> bool:
        return all(lo < r < hi for lo, hi in (x.cov.r_range(p) for x in self.responses if x.cov.has_r))

    def scale_sigma2(self, c: float) -> "StudyConfig":
        return StudyConfig(tuple(replace(x, sigma2=x.sigma2 * c) for x in self.responses))

    def to_dict(self) -> dict[str, Any]:
        return {"responses": [{"sigma2": x.sigma2, "cov": x.cov.to_dict()} for x in self.responses]}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "StudyConfig":
        try:
            items = obj["responses"]
        except (KeyError, TypeError) as exc:
            raise ValidationError("config needs a 'responses' list") from exc
        if not isinstance(items, list):
            raise ValidationError("'responses' must be a list")
        out = []
        for i, item in enumerate(items):
            try:
                out.append(ResponseConfig(float(item["sigma2"]), CovarianceSpec.from_dict(item["cov"])))
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"response {i}: needs 'sigma2' and 'cov'") from exc
        return cls(tuple(out))

    @classmethod
    def from_json(cls, text: str) -> "StudyConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)


def load_config(path) -> StudyConfig:
    with open(path, encoding="utf-8") as fh:
        return StudyConfig.from_json(fh.read())


def _check_pd(v: NDArray, what: str, tol: Tolerances) -> None:
    w = sym_eigen(v, tol).values
    if not w[0] > tol.eig_tol * max(abs(w[-1]), abs(w[0])):
        raise ValidationError(f"{what} is not positive definite (min eigenvalue {w[0]:.3g})")


def build_cov(spec: CovarianceSpec, p: int, tol: Tolerances = DEFAULT_TOL) -> NDArray[np.float64]:
    """Realize the ``p x p`` within-subject covariance ``V``."""
    if p < 1:
        raise ValidationError(f"period count must be positive, got {p}")
    if spec.has_r:
        lo, hi = spec.r_range(p)
        if not lo < spec.r < hi:
            raise ValidationError(
                f"{spec.kind} correlation r={spec.r} outside its admissible range ({lo:g}, {hi:g}) for p={p}"
            )
    idx = np.arange(p)
    if spec.kind == "ar1":
        v = spec.r ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    elif spec.kind == "equicorr":
        v = np.full((p, p), spec.r)
        np.fill_diagonal(v, 1.0)
    elif spec.kind == "identity":
        v = np.eye(p)
    else:
        v = as_matrix(spec.matrix, "custom covariance")
        if v.shape != (p, p):
            raise ValidationError(f"custom covariance is {v.shape[0]}x{v.shape[1]}, design has p={p}")
        if not is_symmetric(v, tol.sym_tol):
            raise ValidationError("custom covariance is not symmetric")
        v = 0.5 * (v + v.T)
    _check_pd(v, f"{spec.kind} covariance", tol)
    return v


def shift_matrix(p: int) -> NDArray[np.float64]:
    """``p x p`` matrix with ones on the sub-diagonal: maps period i to period i+1."""
    return np.eye(p, k=-1)


def incidence_direct(d: Design) -> NDArray[np.float64]:
    """``T_d`` (np x t): row ``j p + i`` marks the treatment of subject j in period i."""
    out = np.zeros((d.n * d.p, d.t))
    out[np.arange(d.n * d.p), d.layout.T.reshape(-1) - 1] = 1.0
    return out


def incidence_carry(d: Design) -> NDArray[np.float64]:
    """``F_d = (I_n kron psi) T_d``; first-period rows are zero."""
    return kron(np.eye(d.n), shift_matrix(d.p)) @ incidence_direct(d)


def nuisance_block(d: Design) -> NDArray[np.float64]:
    """``X_1 = [1_n kron I_p, I_n kron 1_p]`` (periods then subjects)."""
    periods = kron(np.ones((d.n, 1)), np.eye(d.p))
    subjects = kron(np.eye(d.n), np.ones((d.p, 1)))
    return np.hstack([periods, subjects])


def full_design_matrix(d: Design) -> NDArray[np.float64]:
    """``[1, X_1, T_d, F_d]`` with ``1 + p + n + 2t`` columns."""
    return np.hstack([np.ones((d.n * d.p, 1)), nuisance_block(d), incidence_direct(d), incidence_carry(d)])


def v_star(v: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> NDArray[np.float64]:
    """``V^{-1} - delta V^{-1} J V^{-1}`` with ``delta = 1 / (1' V^{-1} 1)``.

    Annihilates the all-ones vector; symmetric non-negative definite.
    """
    v = as_matrix(v, "V")
    if v.shape[0] != v.shape[1] or not is_symmetric(v, tol.sym_tol):
        raise ValidationError("V must be square and symmetric")
    eig = sym_eigen(v, tol)
    if not eig.values[0] > tol.eig_tol * abs(eig.values[-1]):
        raise ValidationError(f"V is not positive definite (min eigenvalue {eig.values[0]:.3g})")
    vinv = (eig.vectors / eig.values) @ eig.vectors.T
    u = vinv.sum(axis=1)
    out = vinv - np.outer(u, u) / u.sum()
    return 0.5 * (out + out.T)


def a_star(d: Design, v: ArrayLike, tol: Tolerances = DEFAULT_TOL) -> NDArray[np.float64]:
    """``H_n kron V*``."""
    return kron(centering_matrix(d.n), v_star(v, tol))
