"""Group laws in global charts.

Every group in scope is handled through one global chart:

* ``euclidean(n)``: points of R^n, composition is addition.
* ``affine``: the "ax+b" group with chart (a, b), a > 0.
* ``affine_line``: affine x R with chart (a, b, c).
* ``bianchi(family, param)``: the semidirect products R^2 x| R with chart
  (a, b, c) and composition ``(v; c)(v'; c') = (v + exp(cM) v'; c + c')``.

All functions below are vectorised over leading array dimensions; a point is
the last axis of an array of shape ``(..., chart_dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("euclidean", "affine", "affine_line", "bianchi")
FAMILIES = ("IV", "V", "VI", "VII")


class GroupSpecError(ValueError):
    """Raised for an unsupported or inconsistent group description."""


class InvalidPointError(ValueError):
    """Raised when chart coordinates lie outside the group's chart domain."""


@dataclass(frozen=True)
class GroupSpec:
    """Description of a concrete group.

    Parameters
    ----------
    kind : str
        One of ``euclidean``, ``affine``, ``affine_line`` or ``bianchi``.
    n : int
        Dimension of a euclidean group; ignored otherwise.
    family : str, optional
        Bianchi family label (``IV``, ``V``, ``VI`` or ``VII``).
    param : float, optional
        The family parameter: ``q`` for VI and ``p`` for VII.
    """

    kind: str
    n: int = 1
    family: str | None = None
    param: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GroupSpecError(f"unknown group kind {self.kind!r}")
        if self.kind == "euclidean":
            if int(self.n) != self.n or self.n < 1:
                raise GroupSpecError("euclidean dimension must be a positive integer")
        if self.kind == "bianchi":
            if self.family not in FAMILIES:
                raise GroupSpecError(f"unknown Bianchi family {self.family!r}")
            if self.family == "VI":
                if self.param is None or not np.isfinite(self.param):
                    raise GroupSpecError("bianchi VI needs a finite parameter q")
                if self.param == 0.0 or self.param == -1.0:
                    raise GroupSpecError("bianchi VI excludes q = 0 and q = -1")
            if self.family == "VII":
                if self.param is None or not np.isfinite(self.param) or self.param <= 0:
                    raise GroupSpecError("bianchi VII needs a parameter p > 0")

    @property
    def chart_dim(self) -> int:
        return {"euclidean": self.n, "affine": 2, "affine_line": 3, "bianchi": 3}[self.kind]

    @property
    def label(self) -> str:
        if self.kind == "euclidean":
            return f"euclidean({self.n})"
        if self.kind == "bianchi":
            if self.family in ("VI", "VII"):
                return f"bianchi({self.family},{self.param:g})"
            return f"bianchi({self.family})"
        return self.kind

    @property
    def is_unimodular(self) -> bool:
        if self.kind == "euclidean":
            return True
        if self.kind == "bianchi":
            return self.trace_generator() == 0.0
        return False

    @property
    def shift_axis(self) -> int | None:
        """Chart axis whose values act as index shifts on representation grids."""
        return {"euclidean": None, "affine": 0, "affine_line": 0, "bianchi": 2}[self.kind]

    # -- Bianchi data ---------------------------------------------------

    def generator(self) -> np.ndarray:
        """The 2x2 matrix M defining the action c -> exp(cM) (Bianchi only)."""
        if self.kind != "bianchi":
            raise GroupSpecError("generator is only defined for Bianchi groups")
        if self.family == "IV":
            return np.array([[1.0, 0.0], [1.0, 1.0]])
        if self.family == "V":
            return np.eye(2)
        if self.family == "VI":
            return np.array([[1.0, 0.0], [0.0, -float(self.param)]])
        p = float(self.param)
        return np.array([[p, -1.0], [1.0, p]])

    def trace_generator(self) -> float:
        return float(np.trace(self.generator()))

    def flow(self, c) -> np.ndarray:
        """Closed form of exp(cM), shape ``c.shape + (2, 2)``."""
        c = np.asarray(c, dtype=float)
        out = np.zeros(c.shape + (2, 2))
        if self.family == "IV":
            e = np.exp(c)
            out[..., 0, 0] = e
            out[..., 1, 0] = c * e
            out[..., 1, 1] = e
        elif self.family == "V":
            e = np.exp(c)
            out[..., 0, 0] = e
            out[..., 1, 1] = e
        elif self.family == "VI":
            out[..., 0, 0] = np.exp(c)
            out[..., 1, 1] = np.exp(-float(self.param) * c)
        elif self.family == "VII":
            e = np.exp(float(self.param) * c)
            out[..., 0, 0] = e * np.cos(c)
            out[..., 0, 1] = -e * np.sin(c)
            out[..., 1, 0] = e * np.sin(c)
            out[..., 1, 1] = e * np.cos(c)
        else:
            raise GroupSpecError("flow is only defined for Bianchi groups")
        return out

    # -- per-axis Haar density ------------------------------------------

    def axis_density(self, axis: int):
        """Factor of the Haar density carried by one chart axis.

        Returns ``("one", 0)``, ``("power", k)`` for ``x**k`` or ``("exp", k)``
        for ``exp(k * x)``. The chart Haar density of every supported group is
        the product of these factors.
        """
        if self.kind in ("affine", "affine_line") and axis == 0:
            return ("power", -2.0)
        if self.kind == "bianchi" and axis == 2:
            return ("exp", -self.trace_generator())
        return ("one", 0.0)


def euclidean(n: int = 1) -> GroupSpec:
    return GroupSpec("euclidean", n=n)


def affine() -> GroupSpec:
    return GroupSpec("affine")


def affine_line() -> GroupSpec:
    return GroupSpec("affine_line")


def bianchi(family: str, param: float | None = None) -> GroupSpec:
    if family == "VII" and param is None:
        param = 1.0
    return GroupSpec("bianchi", family=family, param=None if param is None else float(param))


def parse_group(desc) -> GroupSpec:
    """Build a :class:`GroupSpec` from a string or mapping.

    Accepted strings: ``euclidean(2)``, ``affine``, ``affine_line``,
    ``bianchi(V)``, ``bianchi(VII,1)``.
    """
    if isinstance(desc, GroupSpec):
        return desc
    if isinstance(desc, dict):
        kind = desc.get("kind")
        if kind == "euclidean":
            return euclidean(int(desc.get("n", 1)))
        if kind == "bianchi":
            return bianchi(desc.get("family"), desc.get("param"))
        if kind in ("affine", "affine_line"):
            return GroupSpec(kind)
        raise GroupSpecError(f"unknown group kind {kind!r}")
    if not isinstance(desc, str):
        raise GroupSpecError(f"cannot parse group from {desc!r}")
    text = desc.replace(" ", "")
    if text in ("affine", "affine_line"):
        return GroupSpec(text)
    if text == "euclidean":
        return euclidean(1)
    for kind in ("euclidean", "bianchi"):
        if text.startswith(kind + "(") and text.endswith(")"):
            args = text[len(kind) + 1 : -1].split(",")
            if kind == "euclidean":
                return euclidean(int(args[0]))
            return bianchi(args[0], float(args[1]) if len(args) > 1 else None)
    raise GroupSpecError(f"cannot parse group from {desc!r}")


# -- group law ----------------------------------------------------------


def _points(g: GroupSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (g.chart_dim,):
        raise InvalidPointError(f"{g.label} points need {g.chart_dim} coordinates, got shape {x.shape}")
    return x


def validate(g: GroupSpec, x) -> np.ndarray:
    """Check that ``x`` holds valid chart points and return it as an array."""
    x = _points(g, x)
    if not np.all(np.isfinite(x)):
        raise InvalidPointError("chart coordinates must be finite")
    if g.kind in ("affine", "affine_line") and np.any(x[..., 0] <= 0):
        raise InvalidPointError("affine coordinate a must be strictly positive")
    return x


def identity(g: GroupSpec) -> np.ndarray:
    e = np.zeros(g.chart_dim)
    if g.kind in ("affine", "affine_line"):
        e[0] = 1.0
    return e


def multiply(g: GroupSpec, x, y) -> np.ndarray:
    """Group product ``x y`` in chart coordinates."""
    x = validate(g, x)
    y = validate(g, y)
    x, y = np.broadcast_arrays(x, y)
    out = np.empty(x.shape)
    if g.kind == "euclidean":
        return x + y
    if g.kind in ("affine", "affine_line"):
        out[..., 0] = x[..., 0] * y[..., 0]
        out[..., 1] = x[..., 0] * y[..., 1] + x[..., 1]
        if g.kind == "affine_line":
            out[..., 2] = x[..., 2] + y[..., 2]
        return out
    out[..., :2] = x[..., :2] + _act(g, x[..., 2], y[..., :2])
    out[..., 2] = x[..., 2] + y[..., 2]
    return out


def _act(g: GroupSpec, c, v) -> np.ndarray:
    """``exp(c M) v`` for Bianchi groups without forming the matrices."""
    out = np.empty(v.shape)
    if g.family == "V":
        return np.exp(c)[..., None] * v
    if g.family == "IV":
        e = np.exp(c)
        out[..., 0] = e * v[..., 0]
        out[..., 1] = e * (c * v[..., 0] + v[..., 1])
    elif g.family == "VI":
        out[..., 0] = np.exp(c) * v[..., 0]
        out[..., 1] = np.exp(-float(g.param) * c) * v[..., 1]
    else:
        e = np.exp(float(g.param) * c)
        co, si = e * np.cos(c), e * np.sin(c)
        out[..., 0] = co * v[..., 0] - si * v[..., 1]
        out[..., 1] = si * v[..., 0] + co * v[..., 1]
    return out


def inverse(g: GroupSpec, x) -> np.ndarray:
    """Group inverse in chart coordinates."""
    x = validate(g, x)
    out = np.empty(x.shape)
    if g.kind == "euclidean":
        return -x
    if g.kind in ("affine", "affine_line"):
        out[..., 0] = 1.0 / x[..., 0]
        out[..., 1] = -x[..., 1] / x[..., 0]
        if g.kind == "affine_line":
            out[..., 2] = -x[..., 2]
        return out
    out[..., :2] = -_act(g, -x[..., 2], x[..., :2])
    out[..., 2] = -x[..., 2]
    return out


def modular(g: GroupSpec, x) -> np.ndarray:
    """Modular function, a positive character of the group."""
    x = validate(g, x)
    if g.kind == "euclidean":
        return np.ones(x.shape[:-1])
    if g.kind in ("affine", "affine_line"):
        return 1.0 / x[..., 0]
    return np.exp(-g.trace_generator() * x[..., 2])


def haar_density(g: GroupSpec, x) -> np.ndarray:
    """Density of the left Haar measure with respect to chart Lebesgue measure."""
    x = validate(g, x)
    if g.kind == "euclidean":
        return np.ones(x.shape[:-1])
    if g.kind in ("affine", "affine_line"):
        return x[..., 0] ** -2.0
    return np.exp(-g.trace_generator() * x[..., 2])
