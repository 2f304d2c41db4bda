"""Ground-truth static voltage-drop maps from a resistive grid solve.

The grid is a 4-neighbor mesh with one node per tile. Edge conductance
between adjacent tiles a, b is 2 / (R_eff(a) + R_eff(b)); pads attach their
tile to the supply through g_pad. With d = vdd - v the nodal equations
G v = g_pad*vdd - i reduce to G d = i, which is what both solvers work on:
the zero-injection solution is then exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .design import SyntheticDesign
from .features import FeatureStack


class SolveError(RuntimeError):
    pass


@dataclass
class ConductanceSystem:
    grid_h: int
    grid_w: int
    G: sp.csr_matrix  # symmetric positive definite, includes pad conductance
    i: np.ndarray  # current drawn per node (amps), flattened row-major
    g_pad: float
    pad_nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.grid_h * self.grid_w


def effective_current(
    design: SyntheticDesign,
    stack: FeatureStack,
    alpha: tuple[float, float, float, float] | None = None,
) -> np.ndarray:
    """Per-tile current proxy: P/vdd plus weighted geometry terms (raw channels)."""
    a1, a2, a3, a4 = alpha if alpha is not None else design.alpha
    if min(a1, a2, a3, a4) < 0:
        raise ValueError("current coefficients must be nonnegative")
    p_all = stack.raw("p_all")
    if p_all.shape != (design.grid_h, design.grid_w):
        raise ValueError("feature stack shape does not match design grid")
    cur = (
        p_all / design.vdd
        + a1 * stack.raw("rudy")
        + a2 * stack.raw("rudy_pin")
        + a3 * stack.raw("c_den")
        + a4 * stack.raw("macro")
    )
    return np.maximum(cur, 0.0)


def effective_resistance(
    design: SyntheticDesign,
    stack: FeatureStack,
    r0: float | None = None,
    beta: tuple[float, float, float, float] | None = None,
) -> np.ndarray:
    """Per-tile resistance proxy: r0 scaled up by directional overflow."""
    b1, b2, b3, b4 = beta if beta is not None else design.beta
    r0 = design.r0 if r0 is None else r0
    if r0 <= 0:
        raise ValueError("nominal resistance must be positive")
    if min(b1, b2, b3, b4) < 0:
        raise ValueError("resistance coefficients must be nonnegative")
    res = r0 * (
        1.0
        + b1 * stack.raw("ovfl_egr_h")
        + b2 * stack.raw("ovfl_egr_v")
        + b3 * stack.raw("ovfl_gr_h")
        + b4 * stack.raw("ovfl_gr_v")
    )
    if res.shape != (design.grid_h, design.grid_w):
        raise ValueError("feature stack shape does not match design grid")
    return res


def assemble_system(
    design: SyntheticDesign, r_eff: np.ndarray, i_eff: np.ndarray
) -> ConductanceSystem:
    h, w = design.grid_h, design.grid_w
    if r_eff.shape != (h, w) or i_eff.shape != (h, w):
        raise ValueError("map shapes do not match design grid")
    if np.any(r_eff <= 0):
        raise ValueError("effective resistance must be positive everywhere")
    if not design.pad_locations:
        raise ValueError("design has no pads")

    n = h * w
    idx = np.arange(n).reshape(h, w)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)

    def add_edge(a: int, b: int, g: float) -> None:
        rows.extend((a, b))
        cols.extend((b, a))
        vals.extend((-g, -g))
        diag[a] += g
        diag[b] += g

    for y in range(h):
        for x in range(w):
            if x + 1 < w:
                add_edge(idx[y, x], idx[y, x + 1], 2.0 / (r_eff[y, x] + r_eff[y, x + 1]))
            if y + 1 < h:
                add_edge(idx[y, x], idx[y + 1, x], 2.0 / (r_eff[y, x] + r_eff[y + 1, x]))

    pad_nodes = np.array(sorted(idx[r, c] for r, c in set(design.pad_locations)))
    diag[pad_nodes] += design.g_pad

    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    G = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return ConductanceSystem(
        grid_h=h, grid_w=w, G=G, i=i_eff.reshape(-1).astype(np.float64),
        g_pad=design.g_pad, pad_nodes=pad_nodes,
    )


def conjugate_gradient(
    A: sp.csr_matrix,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> tuple[np.ndarray, int]:
    """Plain CG on an SPD system; converges to relative residual <= tol.

    Inner products use numpy's fixed-order reductions, so the iteration is
    deterministic for a given input.
    """
    n = b.shape[0]
    max_iter = max_iter or 10 * n
    x = np.zeros(n)
    r = b.copy()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x, 0
    d = r.copy()
    rr = float(r @ r)
    for k in range(max_iter):
        if np.sqrt(rr) <= tol * b_norm:
            return x, k
        Ad = A @ d
        a = rr / float(d @ Ad)
        x = x + a * d
        r = r - a * Ad
        rr_new = float(r @ r)
        d = r + (rr_new / rr) * d
        rr = rr_new
    if np.sqrt(rr) <= tol * b_norm:
        return x, max_iter
    raise SolveError(
        f"CG did not converge in {max_iter} iterations "
        f"(relative residual {np.sqrt(rr) / b_norm:.3e})"
    )


DENSE_NODE_LIMIT = 4096


def solve_drop(system: ConductanceSystem, method: str = "cg") -> np.ndarray:
    """Raw voltage-drop map (volts), solving G d = i."""
    if method == "direct-dense":
        if system.n_nodes > DENSE_NODE_LIMIT:
            raise SolveError(
                f"dense solve limited to {DENSE_NODE_LIMIT} nodes, got {system.n_nodes}"
            )
        d = np.linalg.solve(system.G.toarray(), system.i)
    elif method == "cg":
        d, _ = conjugate_gradient(system.G, system.i)
    else:
        raise ValueError(f"unknown method {method!r}")
    return d.reshape(system.grid_h, system.grid_w)


def solve_ir(system: ConductanceSystem, vdd: float, method: str = "cg") -> np.ndarray:
    """Voltage-drop map normalized by vdd; asserts the physical range [0, 1)."""
    drop = solve_drop(system, method) / vdd
    # Tiny negative values can appear from rounding in an exactly-zero tile.
    drop[np.abs(drop) < 1e-14] = np.abs(drop[np.abs(drop) < 1e-14])
    if drop.min() < 0 or drop.max() >= 1.0:
        raise SolveError(
            f"drop map out of [0,1): min {drop.min():.3e}, max {drop.max():.3e}"
        )
    return drop


def ground_truth(design: SyntheticDesign, stack: FeatureStack, method: str = "cg") -> np.ndarray:
    """Full oracle path: proxies -> system -> normalized drop map."""
    i_eff = effective_current(design, stack)
    r_eff = effective_resistance(design, stack)
    system = assemble_system(design, r_eff, i_eff)
    return solve_ir(system, design.vdd, method)
