"""Polytopes {x : Ax > b}: construction, validation, slacks, generators, JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "Polytope",
    "SlackView",
    "ValidationReport",
    "slacks",
    "validate",
    "generate",
    "load_polytope",
    "save_polytope",
    "polytope_to_dict",
    "polytope_from_dict",
]

RANK_TOL = 1e-10  # relative to the largest singular value of A


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Polytope:
    """Open polytope {x : Ax > b} with a strictly feasible witness x0.

    A is m-by-n with m >= n; immutable after construction and safe to share
    across concurrent chains. The constructor only enforces shapes; rank,
    feasibility and finiteness are checked by :func:`validate`.
    """

    A: np.ndarray
    b: np.ndarray
    x0: np.ndarray
    name: str = "polytope"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).ravel()
        x0 = np.asarray(self.x0, dtype=np.float64).ravel()
        m, n = A.shape
        if n < 1 or m < n:
            raise InputError(f"need m >= n >= 1, got A of shape {m}x{n}")
        if b.shape != (m,):
            raise InputError(f"b has length {b.shape[0]}, expected {m}")
        if x0.shape != (n,):
            raise InputError(f"x0 has length {x0.shape[0]}, expected {n}")
        object.__setattr__(self, "A", _as_readonly(A))
        object.__setattr__(self, "b", _as_readonly(b))
        object.__setattr__(self, "x0", _as_readonly(x0))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def slack_floor(self) -> float:
        """Hard floor on slacks: 1e-12 times the smallest slack at x0."""
        s0 = self.A @ self.x0 - self.b
        smin = float(s0.min())
        return 1e-12 * smin if smin > 0 else 0.0

    def translated(self, shift: np.ndarray) -> "Polytope":
        """Same body shifted by `shift` (A unchanged, b and x0 adjusted)."""
        shift = np.asarray(shift, dtype=np.float64)
        return Polytope(self.A, self.b + self.A @ shift, self.x0 + shift, self.name)


@dataclass(frozen=True)
class SlackView:
    """Slack vector s = Ax - b; the point is interior iff min(s) > 0."""

    s: np.ndarray
    interior: bool


@dataclass
class ValidationReport:
    ok: bool = True
    failures: list[str] = field(default_factory=list)

    def add(self, msg: str) -> None:
        self.ok = False
        self.failures.append(msg)


def slacks(P: Polytope, x: np.ndarray) -> SlackView:
    """Slacks s = Ax - b at x; raises InputError on dimension mismatch."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (P.n,):
        raise InputError(f"x has length {x.shape[0]}, expected {P.n}")
    if not np.all(np.isfinite(x)):
        raise InputError("x has non-finite entries")
    s = P.A @ x - P.b
    return SlackView(s=s, interior=bool(s.min() > 0))


def validate(P: Polytope) -> ValidationReport:
    """Check full column rank, strict feasibility of x0 and finiteness."""
    report = ValidationReport()
    finite = np.all(np.isfinite(P.A)) and np.all(np.isfinite(P.b)) and np.all(
        np.isfinite(P.x0)
    )
    if not finite:
        report.add("non-finite entries in A, b or x0")
        return report
    svals = np.linalg.svd(P.A, compute_uv=False)
    rank = int(np.sum(svals > RANK_TOL * svals[0]))
    if rank < P.n:
        report.add(f"A has column rank {rank} < n = {P.n}")
    s0 = P.A @ P.x0 - P.b
    if not s0.min() > 0:
        report.add(f"x0 is not strictly interior (min slack {s0.min():.3e})")
    return report


def generate(kind: str, n: int, m: int | None = None, seed: int = 0) -> Polytope:
    """Standard test bodies: unit cube, standard simplex, random halfspaces.

    cube: [0,1]^n with m = 2n; simplex: {x >= 0, sum x <= 1} with m = n+1;
    random_halfspaces: m unit normals uniform on the sphere, b_i = -1
    (contains the origin with unit slack), requires m > n.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    if kind == "cube":
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([np.zeros(n), -np.ones(n)])
        return Polytope(A, b, np.full(n, 0.5), name=f"cube_{n}")
    if kind == "simplex":
        A = np.vstack([np.eye(n), -np.ones((1, n))])
        b = np.concatenate([np.zeros(n), [-1.0]])
        return Polytope(A, b, np.full(n, 1.0 / (n + 1)), name=f"simplex_{n}")
    if kind == "random_halfspaces":
        if m is None or m <= n:
            raise InputError("random_halfspaces needs m > n")
        rng = np.random.Generator(np.random.Philox(key=seed))
        A = rng.standard_normal((m, n))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        b = -np.ones(m)
        return Polytope(A, b, np.zeros(n), name=f"random_{n}x{m}_seed{seed}")
    raise InputError(f"unknown polytope kind {kind!r}")


def polytope_to_dict(P: Polytope) -> dict:
    return {
        "name": P.name,
        "m": P.m,
        "n": P.n,
        "A": [list(map(float, row)) for row in P.A],
        "b": [float(v) for v in P.b],
        "x0": [float(v) for v in P.x0],
    }


def polytope_from_dict(d: dict) -> Polytope:
    for key in ("A", "b", "x0"):
        if key not in d:
            raise InputError(f"polytope: missing {'interior witness' if key == 'x0' else key}")
    P = Polytope(
        np.asarray(d["A"], dtype=np.float64),
        np.asarray(d["b"], dtype=np.float64),
        np.asarray(d["x0"], dtype=np.float64),
        name=str(d.get("name", "polytope")),
    )
    if "m" in d and int(d["m"]) != P.m:
        raise InputError(f"declared m = {d['m']} but A has {P.m} rows")
    if "n" in d and int(d["n"]) != P.n:
        raise InputError(f"declared n = {d['n']} but A has {P.n} columns")
    return P


def save_polytope(P: Polytope, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(polytope_to_dict(P), fh, indent=1)
        fh.write("\n")


def load_polytope(path: str) -> Polytope:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"polytope: invalid JSON ({exc})") from exc
    return polytope_from_dict(d)


def analytic_volume(kind: str, n: int) -> float:
    """Exact volumes of the generated reference bodies."""
    if kind == "cube":
        return 1.0
    if kind == "simplex":
        return 1.0 / math.factorial(n)
    raise InputError(f"no analytic volume for kind {kind!r}")
