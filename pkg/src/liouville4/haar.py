"""Isotropic Haar system on T^4 and piecewise-constant grid fields.

A level-l Haar function is addressed by (level, alpha, beta) with alpha in
{0..2^l-1}^4 selecting the dyadic cube and beta in {0,1}^4 minus zero selecting
one of the 15 sign patterns. On the 16 half-size children c in {0,1}^4 of its
cube it takes the value 2^(2l) * (-1)^(beta . c).

Coefficient tables are stored per level as arrays of shape (2^l,)*4 + (15,);
their C-order flattening is the lexicographic (alpha, beta) order.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

BETAS: tuple[tuple[int, int, int, int], ...] = tuple(
    b for b in itertools.product((0, 1), repeat=4) if any(b))
_CHILDREN = np.array(list(itertools.product((0, 1), repeat=4)))
# signs[beta, child] = (-1)^(beta . child)
_SIGNS = (-1.0) ** (np.array(BETAS) @ _CHILDREN.T)


class HaarIndex(NamedTuple):
    level: int
    alpha: tuple[int, int, int, int]
    beta: tuple[int, int, int, int]

    def validate(self) -> "HaarIndex":
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        if not all(0 <= a < 2**self.level for a in self.alpha):
            raise ValueError(f"alpha {self.alpha} outside A_{self.level}")
        if tuple(self.beta) not in BETAS:
            raise ValueError(f"beta {self.beta} must be a nonzero 0/1 vector")
        return self

    @property
    def beta_rank(self) -> int:
        return BETAS.index(tuple(self.beta))


class DyadicCube(NamedTuple):
    level: int
    alpha: tuple[int, int, int, int]

    @property
    def volume(self) -> float:
        return 2.0 ** (-4 * self.level)

    def contains(self, x) -> bool:
        return containing_cube(x, self.level) == self


def containing_cube(x, level: int) -> DyadicCube:
    """The unique half-open cube of the level containing x."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    alpha = np.floor(x * 2**level).astype(int) % 2**level
    return DyadicCube(level, tuple(int(a) for a in alpha))


def count_indices(level: int) -> int:
    return 15 * 2 ** (4 * level)


def enumerate_indices(level: int) -> Iterator[HaarIndex]:
    """All Haar indices of one level in lexicographic (alpha, beta) order."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    for alpha in itertools.product(range(2**level), repeat=4):
        for beta in BETAS:
            yield HaarIndex(level, alpha, beta)


def haar_eval(idx: HaarIndex, x) -> np.ndarray | float:
    """Pointwise value of eta_{level, alpha, beta}; accepts points of shape (..., 4)."""
    level, alpha, beta = idx
    pts = np.mod(np.asarray(x, dtype=float), 1.0)
    scaled = pts * 2**level - np.asarray(alpha, dtype=float)
    inside = np.all((scaled >= 0) & (scaled < 1), axis=-1)
    upper_half = scaled >= 0.5
    flips = np.sum(upper_half & (np.asarray(beta) == 1), axis=-1)
    val = np.where(inside, 4.0**level * (-1.0) ** flips, 0.0)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# grid fields


@dataclass
class GridField:
    """Level plus one real value per dyadic cube (equivalently per lattice site)."""

    level: int
    values: np.ndarray
    grounded: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (2**self.level,) * 4:
            raise ValueError(f"values must have shape {(2**self.level,) * 4}")
        if self.grounded and abs(self.values.mean()) > 1e-12 * max(1.0, np.abs(self.values).max()):
            raise ValueError("field flagged grounded but its mean is nonzero")

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-4 * self.level)

    def mean(self) -> float:
        return float(self.values.mean())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.mean(self.values**2)))

    def inner(self, other: "GridField") -> float:
        a, b = _common_level(self, other)
        return float(np.mean(a * b))

    def evaluate(self, x) -> np.ndarray | float:
        pts = np.mod(np.asarray(x, dtype=float), 1.0)
        idx = np.floor(pts * 2**self.level).astype(int) % 2**self.level
        val = self.values[idx[..., 0], idx[..., 1], idx[..., 2], idx[..., 3]]
        return float(val) if np.ndim(val) == 0 else val

    def refined(self, level: int) -> "GridField":
        """Same piecewise-constant function sampled on a finer grid."""
        if level < self.level:
            raise ValueError("refinement needs a finer level")
        r = 2 ** (level - self.level)
        vals = self.values
        for ax in range(4):
            vals = np.repeat(vals, r, axis=ax)
        return GridField(level, vals, self.grounded)


def _common_level(a: GridField, b: GridField):
    L = max(a.level, b.level)
    return a.refined(L).values, b.refined(L).values


def block_average(values: np.ndarray, levels_down: int = 1) -> np.ndarray:
    """Average 2^(4*levels_down) children into their parent cubes."""
    for _ in range(levels_down):
        P = values.shape[0] // 2
        values = values.reshape(P, 2, P, 2, P, 2, P, 2).mean(axis=(1, 3, 5, 7))
    return values


def project_piecewise(u, level: int, quadrature_order: int = 4) -> GridField:
    """Cube averages u_l(x) = 2^(4l) int_{Q_l(x)} u.

    ``u`` may be a GridField of level >= ``level`` (exact averaging) or a
    callable on points of shape (..., 4), integrated by tensor Gauss-Legendre
    quadrature of the given order on every cube.
    """
    if isinstance(u, GridField):
        if u.level < level:
            raise ValueError("cannot project onto a finer level than the field's")
        vals = block_average(u.values, u.level - level)
        return GridField(level, vals, u.grounded)
    if not callable(u):
        raise TypeError("u must be a GridField or a callable")
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_order)
    nodes = (nodes + 1) / 2
    weights = weights / 2
    P = 2**level
    h = 1.0 / P
    corners = np.arange(P) * h
    offs = corners[:, None] + h * nodes[None, :]
    X = np.stack(np.meshgrid(*[offs.ravel()] * 4, indexing="ij"), axis=-1)
    vals = np.asarray(u(X), dtype=float).reshape((P, quadrature_order) * 4)
    w = weights
    avg = np.einsum("aibjckdl,i,j,k,l->abcd", vals, w, w, w, w)
    return GridField(level, avg)


# ---------------------------------------------------------------------------
# fast transforms


def _children_last(values: np.ndarray) -> np.ndarray:
    P = values.shape[0] // 2
    v = values.reshape(P, 2, P, 2, P, 2, P, 2).transpose(0, 2, 4, 6, 1, 3, 5, 7)
    return v.reshape(P, P, P, P, 16)


def _children_in_place(blocks: np.ndarray) -> np.ndarray:
    P = blocks.shape[0]
    v = blocks.reshape(P, P, P, P, 2, 2, 2, 2).transpose(0, 4, 1, 5, 2, 6, 3, 7)
    return v.reshape(2 * P, 2 * P, 2 * P, 2 * P)


def haar_coefficients(u: GridField) -> list[np.ndarray]:
    """Inner products <u, eta_{k, alpha, beta}> for all levels k < u.level.

    Returns a list indexed by level of arrays shaped (2^k,)*4 + (15,). The
    sums are exact cell sums; the constant part of u is ignored.
    """
    coeffs: list[np.ndarray] = []
    vals = u.values
    for k in range(u.level - 1, -1, -1):
        kids = _children_last(vals)
        coeffs.append(2.0 ** (-2 * k - 4) * kids @ _SIGNS.T)
        vals = kids.mean(axis=-1)
    return coeffs[::-1]


def haar_synthesis(coefficients: list[np.ndarray], mean: float = 0.0) -> np.ndarray:
    """Cell values at level len(coefficients) of mean + sum c * eta."""
    vals = np.full((1, 1, 1, 1), float(mean))
    for k, c in enumerate(coefficients):
        if c.shape != (2**k,) * 4 + (15,):
            raise ValueError(f"level-{k} coefficients must have shape {(2**k,) * 4 + (15,)}")
        kids = vals[..., None] + 4.0**k * (c @ _SIGNS)
        vals = _children_in_place(kids)
    return vals


def reconstruct(coefficients: list[np.ndarray], mean: float = 0.0) -> GridField:
    return GridField(len(coefficients), haar_synthesis(coefficients, mean), grounded=mean == 0.0)


def flatten_coefficients(coefficients: list[np.ndarray]) -> dict[HaarIndex, float]:
    """Coefficient tables as a {HaarIndex: value} mapping in enumeration order."""
    out: dict[HaarIndex, float] = {}
    for k, c in enumerate(coefficients):
        for idx, val in zip(enumerate_indices(k), c.ravel()):
            out[idx] = float(val)
    return out


def haar_grid(idx: HaarIndex, level: int) -> GridField:
    """eta_idx as a piecewise-constant field on a grid of level > idx.level."""
    if level <= idx.level:
        raise ValueError("a level-k Haar function lives on level k+1 cells or finer")
    coeffs = [np.zeros((2**k,) * 4 + (15,)) for k in range(idx.level + 1)]
    coeffs[idx.level][tuple(idx.alpha) + (idx.beta_rank,)] = 1.0
    return GridField(idx.level + 1, haar_synthesis(coeffs), grounded=True).refined(level)

