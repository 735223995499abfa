"""Finite-difference solvers for the one-step ODE ``(a2/2) u'' - u/t* = -phi/t*``.

The same equation serves both directions:

* backward, in the spot variable, where ``phi`` is the payoff (or the
  previous step's values) and ``u`` the price one gamma step earlier;
* forward (Dupire), in the strike variable, where ``phi`` is the previous
  call curve and ``u`` the next one.

Boundary values are Dirichlet and equal to ``phi`` at the ends, which is the
absorbed-process condition in the backward case and ``C(L) = x - L``,
``C(U) = 0`` in the forward case.

The discretization is a finite-volume form of the second-order central
difference: at node ``k`` the source is weighted by the speed measure of its
control volume, ``(h_l / a2_l + h_r / a2_r) / t*``, with ``a2`` constant on
each cell.  On a knot-aligned grid this stays second order across jumps of a
piecewise-constant coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import SingularSystem

DEFAULT_NODES = 2000
MERGE_TOL = 1e-9  # relative to the grid span


@dataclass(frozen=True)
class SpatialGrid:
    """Nodes ``L = x_0 < ... < x_{n+1} = U`` with one coefficient value per cell.

    ``cell_a2[k]`` is the variance on ``[x_k, x_{k+1})``, i.e. the right limit
    of the coefficient at node ``x_k``.
    """

    nodes: np.ndarray
    cell_a2: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        a2 = np.asarray(self.cell_a2, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "cell_a2", a2)
        if len(nodes) < 3 or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing with at least one interior node")
        if a2.shape != (len(nodes) - 1,):
            raise ValueError("need one coefficient value per cell")
        if not np.all(np.isfinite(a2)) or np.any(a2 <= 0):
            raise SingularSystem("coefficient samples must be positive and finite")

    @property
    def L(self):
        return float(self.nodes[0])

    @property
    def U(self):
        return float(self.nodes[-1])

    @property
    def node_a2(self):
        """Right-limit samples at the nodes (the last node repeats its left cell)."""
        return np.append(self.cell_a2, self.cell_a2[-1])

    @classmethod
    def from_function(cls, nodes, a2_fn):
        """Grid with each cell's coefficient sampled at the cell midpoint."""
        nodes = np.asarray(nodes, dtype=float)
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        return cls(nodes, np.asarray(a2_fn(mid), dtype=float))

    def with_coefficient(self, a2_fn):
        return SpatialGrid.from_function(self.nodes, a2_fn)

    def refine(self):
        """Halve every cell; the coefficient is inherited."""
        mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        nodes = np.empty(2 * len(self.nodes) - 1)
        nodes[0::2] = self.nodes
        nodes[1::2] = mid
        return SpatialGrid(nodes, np.repeat(self.cell_a2, 2))


def aligned_nodes(L, U, n=DEFAULT_NODES, knots=()):
    """About ``n`` interior nodes on ``[L, U]`` with every knot in it a node.

    Each sub-interval between consecutive knots is split uniformly into a
    number of cells proportional to its length (at least one).
    """
    total = U - L
    pts = np.unique(np.concatenate([[L, U], [k for k in knots if L < k < U]]))
    # knots from different slices can differ by round-off; a sliver cell
    # between them wrecks the difference quotients
    keep = np.concatenate([[True], np.diff(pts) > MERGE_TOL * total])
    keep[-1] = True
    pts = pts[keep]
    if len(pts) > 2 and pts[-1] - pts[-2] <= MERGE_TOL * total:
        pts = np.delete(pts, -2)
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        cells = max(1, int(round((n + 1) * (b - a) / total)))
        out.append(np.linspace(a, b, cells + 1)[1:])
    return np.concatenate(out)


def uniform_grid(L, U, a2_fn, n=DEFAULT_NODES):
    return SpatialGrid.from_function(np.linspace(L, U, n + 2), a2_fn)


def slice_grid(slc, n=DEFAULT_NODES, extra=()):
    """Knot-aligned grid carrying the slice's squared volatility."""
    nodes = aligned_nodes(slc.L, slc.U, n, tuple(slc.nu) + (slc.x,) + tuple(extra))
    return SpatialGrid.from_function(nodes, lambda m: slc.local_sigma(m) ** 2)


def solve_backward_step(grid: SpatialGrid, tstar: float, source) -> np.ndarray:
    """Node values of ``u`` solving one step; ``u = source`` at both ends."""
    if not tstar > 0:
        raise SingularSystem("step size must be positive")
    phi = np.asarray(source, dtype=float)
    if phi.shape != grid.nodes.shape:
        raise ValueError("source must have one value per node")
    h = np.diff(grid.nodes)
    hl, hr = h[:-1], h[1:]
    weight = (hl / grid.cell_a2[:-1] + hr / grid.cell_a2[1:]) / tstar
    lower = 1.0 / hl
    upper = 1.0 / hr
    diag = -(lower + upper + weight)
    rhs = -weight * phi[1:-1]
    rhs[0] -= lower[0] * phi[0]
    rhs[-1] -= upper[-1] * phi[-1]
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    try:
        inner = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(inner)):
        raise SingularSystem("non-finite solution")
    return np.concatenate([[phi[0]], inner, [phi[-1]]])


@dataclass(frozen=True)
class PDDESolution:
    nodes: np.ndarray
    values: tuple  # values[m] after m steps; values[0] is the payoff
    step_sizes: tuple

    def at(self, m, points):
        return np.interp(points, self.nodes, self.values[m])


def propagate_european(grid: SpatialGrid, payoff, schedule) -> PDDESolution:
    """Apply successive backward steps.

    ``payoff`` is an array of node values or a callable; ``schedule`` is a
    sequence of ``(a2, tstar)`` where ``a2`` is a callable coefficient, a
    ready ``SpatialGrid`` on the same nodes, or ``None`` to keep ``grid``'s.
    """
    phi = np.asarray(payoff(grid.nodes) if callable(payoff) else payoff, dtype=float)
    values = [phi]
    steps = []
    for a2, tstar in schedule:
        if a2 is None:
            g = grid
        elif isinstance(a2, SpatialGrid):
            g = a2
        else:
            g = grid.with_coefficient(a2)
        values.append(solve_backward_step(g, tstar, values[-1]))
        steps.append(float(tstar))
    return PDDESolution(grid.nodes, tuple(values), tuple(steps))


def dupire_forward_step(grid: SpatialGrid, tstar: float, prev_calls, spot: float) -> np.ndarray:
    """Next call curve in strike from the previous one.

    ``prev_calls`` is sampled on ``grid.nodes``; outside its own bounds the
    previous curve must already equal intrinsic value.  The boundary values
    ``x - L`` and ``0`` are enforced.
    """
    prev = np.array(prev_calls, dtype=float)
    if prev.shape != grid.nodes.shape:
        raise ValueError("previous curve must have one value per node")
    prev[0] = spot - grid.L
    prev[-1] = 0.0
    return solve_backward_step(grid, tstar, prev)


def model_backward_prices(model, payoff, n=DEFAULT_NODES, maturity=None):
    """Prices at time 0 as a function of spot for a payoff paid at ``T_m``.

    ``maturity`` is the 1-based index ``m`` (default: the last).  Works on a
    knot-aligned grid over the bounds of slice ``m``; step ``j`` is solved on
    ``[L_j, U_j]`` only, where that interval's coefficient lives.
    """
    from .surface import local_variance

    last = model.n_intervals if maturity is None else int(maturity)
    if not 1 <= last <= model.n_intervals:
        raise ValueError(f"maturity index {last} out of range")
    used = model.slices[:last]
    knots = np.unique(np.concatenate([s.nu for s in used] + [[model.x]]))
    nodes = aligned_nodes(used[-1].L, used[-1].U, n, knots)
    u = np.asarray(payoff(nodes), dtype=float)
    for m in range(last, 0, -1):
        s = model.slices[m - 1]
        inside = (nodes >= s.L) & (nodes <= s.U)
        g = SpatialGrid.from_function(nodes[inside], lambda k, m=m: local_variance(model, m, k))
        u = u.copy()
        u[inside] = solve_backward_step(g, model.step_sizes[m - 1], u[inside])
    return nodes, u


def model_forward_calls(model, strikes_n=DEFAULT_NODES):
    """Dupire chain: call curves at every maturity on a common strike grid."""
    from .surface import local_variance

    knots = np.unique(np.concatenate([s.nu for s in model.slices] + [[model.x]]))
    L = min(s.L for s in model.slices)
    U = max(s.U for s in model.slices)
    nodes = aligned_nodes(L, U, strikes_n, knots)
    C = np.maximum(model.x - nodes, 0.0)
    curves = []
    for m in range(1, model.n_intervals + 1):
        s = model.slices[m - 1]
        inside = (nodes >= s.L) & (nodes <= s.U)
        g = SpatialGrid.from_function(nodes[inside], lambda k, m=m: local_variance(model, m, k))
        C = C.copy()
        C[inside] = dupire_forward_step(g, model.step_sizes[m - 1], C[inside], model.x)
        curves.append(C)
    return nodes, curves
