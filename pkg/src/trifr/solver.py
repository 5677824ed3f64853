"""
Periodic triangular-mesh solver
===============================

Flux reconstruction on a periodic box split into ``2 (n_x - 1)^2`` right
triangles. Every element is an affine image of the equilateral reference
triangle, so metric terms are constant per element and are folded into the
differentiation and correction operators once at setup.

The state is stored nodally as an array of shape ``(n_elem, n_vars, N_k)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from trifr.correction import correction_matrix
from trifr.operators import OperatorSet, build_modal_operators, nodal_operators
from trifr.polybasis import REF, BasisSet, solution_points, vandermonde, volume_quadrature
from trifr.qfamily import q_matrix

log = logging.getLogger(__name__)

DOMAIN = (-10.0, 10.0, -10.0, 10.0)


class SolverError(RuntimeError):
    pass


# {{{ mesh

@dataclass(frozen=True)
class TriMesh:
    box: tuple
    n_x: int
    vertices: np.ndarray      # (n_elem, 3, 2), counterclockwise
    J: np.ndarray             # (n_elem, 2, 2)
    Jinv: np.ndarray
    detJ: np.ndarray
    edge_ratio: np.ndarray    # physical / reference edge length, (n_elem, 3)
    normals: np.ndarray       # outward unit normals per edge, (n_elem, 3, 2)
    nbr_elem: np.ndarray      # (n_elem, 3)
    nbr_edge: np.ndarray      # (n_elem, 3)

    @property
    def n_elem(self) -> int:
        return len(self.vertices)

    @property
    def period(self) -> np.ndarray:
        x0, x1, y0, y1 = self.box
        return np.array([x1 - x0, y1 - y0])

    @property
    def area(self) -> float:
        return float(np.sum(self.detJ) * REF.area)

    @property
    def h(self) -> float:
        return float(self.period[0] / (self.n_x - 1))

    def map(self, ref_points) -> np.ndarray:
        """Physical images of reference points, shape (n_elem, n_pts, 2)."""
        ref = np.atleast_2d(ref_points) - REF.vertices[0]
        return self.vertices[:, None, 0, :] + np.einsum("eij,pj->epi", self.J, ref)


def build_mesh(n_x: int, box=DOMAIN) -> TriMesh:
    """Uniform periodic mesh; each cell is split from bottom-left to top-right."""
    if n_x < 3:
        raise ValueError("n_x must be at least 3")
    x0, x1, y0, y1 = box
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate domain")
    xs = np.linspace(x0, x1, n_x)
    ys = np.linspace(y0, y1, n_x)

    tris = []
    for j in range(n_x - 1):
        for i in range(n_x - 1):
            a = (xs[i], ys[j]); b = (xs[i + 1], ys[j])
            c = (xs[i + 1], ys[j + 1]); d = (xs[i], ys[j + 1])
            tris.append((a, b, c))
            tris.append((a, c, d))
    verts = np.array(tris)

    rv = REF.vertices
    Bref = np.column_stack([rv[1] - rv[0], rv[2] - rv[0]])
    Bphys = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=2)
    J = Bphys @ np.linalg.inv(Bref)
    Jinv = np.linalg.inv(J)
    detJ = np.linalg.det(J)

    ev = verts[:, [1, 2, 0]] - verts                      # edge vectors
    lengths = np.linalg.norm(ev, axis=2)
    ratio = lengths / REF.edge_lengths
    normals = np.stack([ev[..., 1], -ev[..., 0]], axis=2) / lengths[..., None]

    # pair edges through their midpoints modulo the period
    period = np.array([x1 - x0, y1 - y0])
    mid = 0.5 * (verts + verts[:, [1, 2, 0]])
    key = np.round(np.mod(mid - [x0, y0], period) / period * 4 * (n_x - 1)).astype(int)
    key = np.mod(key, 4 * (n_x - 1))
    owners: dict = {}
    for e in range(len(verts)):
        for f in range(3):
            owners.setdefault(tuple(key[e, f]), []).append((e, f))
    nbr_elem = np.empty((len(verts), 3), dtype=int)
    nbr_edge = np.empty((len(verts), 3), dtype=int)
    for pair in owners.values():
        if len(pair) != 2:
            raise SolverError("edge pairing failed")
        (e0, f0), (e1, f1) = pair
        nbr_elem[e0, f0], nbr_edge[e0, f0] = e1, f1
        nbr_elem[e1, f1], nbr_edge[e1, f1] = e0, f0

    return TriMesh(tuple(box), n_x, verts, J, Jinv, detJ, ratio, normals,
                   nbr_elem, nbr_edge)

# }}}


# {{{ discretisation

@dataclass
class Discretization:
    mesh: TriMesh
    ops: OperatorSet
    Q: np.ndarray                       # nodal frame
    C: np.ndarray                       # (n_elem, N_k, N_f), metric included
    nbr_elem: np.ndarray                # per flux point, (n_elem, N_f)
    nbr_fp: np.ndarray
    normals: np.ndarray                 # (n_elem, N_f, 2)
    fp_xy: np.ndarray = field(repr=False)
    sp_xy: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.ops.k

    def gradient(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Fxi = F @ self.ops.Dx.T
        Feta = F @ self.ops.Dy.T
        Ji = self.mesh.Jinv
        gx = Ji[:, None, None, 0, 0] * Fxi + Ji[:, None, None, 1, 0] * Feta
        gy = Ji[:, None, None, 0, 1] * Fxi + Ji[:, None, None, 1, 1] * Feta
        return gx, gy

    def divergence(self, Fx: np.ndarray, Fy: np.ndarray) -> np.ndarray:
        return self.gradient(Fx)[0] + self.gradient(Fy)[1]

    def trace(self, u: np.ndarray) -> np.ndarray:
        return u @ self.ops.L.T

    def outer(self, uf: np.ndarray) -> np.ndarray:
        """Neighbour traces matched to this element's flux points."""
        return np.transpose(uf[self.nbr_elem, :, self.nbr_fp], (0, 2, 1))

    def lift(self, jump: np.ndarray) -> np.ndarray:
        return np.einsum("eij,evj->evi", self.C, jump)


def discretize(mesh: TriMesh, k: int, q=None) -> Discretization:
    """Nodal operators on warp-blend points, optional family parameters *q*."""
    modal = build_modal_operators(k)
    ops = nodal_operators(modal, solution_points(k))
    Qm = np.zeros_like(modal.M) if q is None or not np.any(q) else q_matrix(tuple(q), k).Q
    Vinv = np.linalg.inv(ops.V)
    Qn = Vinv.T @ Qm @ Vinv
    Cref = correction_matrix(ops, Qm).C

    nf_edge = k + 1
    edge_of_fp = np.repeat(np.arange(3), nf_edge)
    pos = np.tile(np.arange(nf_edge), 3)
    scale = mesh.edge_ratio[:, edge_of_fp] / mesh.detJ[:, None]
    C = Cref[None] * scale[:, None, :]

    nbr_elem = mesh.nbr_elem[:, edge_of_fp]
    nbr_edge = mesh.nbr_edge[:, edge_of_fp]
    # the neighbour walks the shared edge the other way round
    nbr_fp = nbr_edge * nf_edge + (nf_edge - 1 - pos)[None, :]
    normals = mesh.normals[:, edge_of_fp]

    return Discretization(mesh, ops, Qn, C, nbr_elem, nbr_fp, normals,
                          mesh.map(ops.flux_points), mesh.map(ops.solution_points))


def pairing_error(disc: Discretization) -> float:
    """Largest distance, modulo the period, between paired flux points."""
    p = disc.fp_xy
    d = p - p[disc.nbr_elem, disc.nbr_fp]
    per = disc.mesh.period
    d -= per * np.round(d / per)
    return float(np.abs(d).max())

# }}}


# {{{ right-hand sides

def advection_rhs(u: np.ndarray, disc: Discretization, a, kappa: float) -> np.ndarray:
    """Linear advection with the kappa-weighted upwind interface flux."""
    ax, ay = a
    div = disc.divergence(ax * u, ay * u)
    um = disc.trace(u)
    up = disc.outer(um)
    an = disc.normals @ np.asarray(a, dtype=float)
    an = an[:, None, :]
    fnum = 0.5 * an * (um + up) + 0.5 * kappa * np.abs(an) * (um - up)
    return -div - disc.lift(fnum - an * um)


def primitive(u: np.ndarray, gamma: float):
    rho = u[:, 0]
    vx = u[:, 1] / rho
    vy = u[:, 2] / rho
    p = (gamma - 1) * (u[:, 3] - 0.5 * rho * (vx**2 + vy**2))
    return rho, vx, vy, p


def euler_flux(u: np.ndarray, gamma: float):
    rho, vx, vy, p = primitive(u, gamma)
    E = u[:, 3]
    Fx = np.stack([rho * vx, rho * vx * vx + p, rho * vx * vy, (E + p) * vx], axis=1)
    Fy = np.stack([rho * vy, rho * vx * vy, rho * vy * vy + p, (E + p) * vy], axis=1)
    return Fx, Fy


def rusanov_flux(uL: np.ndarray, uR: np.ndarray, n: np.ndarray, gamma: float):
    """Local Lax-Friedrichs flux. States are ``(..., 4, m)``, normals ``(..., m, 2)``
    or a single 2-vector."""
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    squeeze = uL.ndim == 1
    if squeeze:
        uL, uR = uL[None, :, None], uR[None, :, None]
        n = np.asarray(n, dtype=float)[None, None, :]
    nx, ny = n[..., 0][:, None, :], n[..., 1][:, None, :]
    lam = None
    fl = []
    for s in (uL, uR):
        rho, vx, vy, p = primitive(s, gamma)
        if np.any(p <= 0) or np.any(rho <= 0):
            raise SolverError("non-physical state in Rusanov flux")
        Fx, Fy = euler_flux(s, gamma)
        fl.append(Fx * nx + Fy * ny)
        c = np.sqrt(gamma * p / rho)
        sp = np.abs(vx * nx[:, 0] + vy * ny[:, 0]) + c
        lam = sp if lam is None else np.maximum(lam, sp)
    out = 0.5 * (fl[0] + fl[1]) - 0.5 * lam[:, None, :] * (uR - uL)
    return out[0, :, 0] if squeeze else out


def euler_rhs(u: np.ndarray, disc: Discretization, gamma: float, t: float = 0.0):
    rho, _, _, p = primitive(u, gamma)
    bad = np.where((rho <= 0).any(axis=1) | (p <= 0).any(axis=1))[0]
    if len(bad):
        raise SolverError(f"negative density or pressure in element {bad[0]} at t={t}")
    Fx, Fy = euler_flux(u, gamma)
    div = disc.divergence(Fx, Fy)
    um = disc.trace(u)
    up = disc.outer(um)
    nx = disc.normals[..., 0][:, None, :]
    ny = disc.normals[..., 1][:, None, :]
    fn_in = disc.trace(Fx) * nx + disc.trace(Fy) * ny
    fnum = rusanov_flux(um, up, disc.normals, gamma)
    return -div - disc.lift(fnum - fn_in)


def rk4_step(u, rhs, dt: float, t: float = 0.0):
    """Classical four-stage Runge-Kutta; ``rhs(u, t)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = rhs(u, t)
    k2 = rhs(u + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(u + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(u + dt * k3, t + dt)
    out = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SolverError(f"non-finite state after step at t={t}")
    return out

# }}}


# {{{ monitors

def energy_monitor(u: np.ndarray, disc: Discretization) -> float:
    A = disc.ops.M + disc.Q
    e = np.einsum("evi,ij,evj->e", u, A, u)
    return float(np.sum(disc.mesh.detJ * e))


def total_mass(u: np.ndarray, disc: Discretization) -> np.ndarray:
    """Integral of each variable over the domain."""
    w = np.ones(disc.ops.n_modes) @ disc.ops.M
    return np.einsum("e,evi,i->v", disc.mesh.detJ, u, w)


def vortex_primitives(x, y, mach=0.4, beta=13.5, radius=1.5, gamma=1.4,
                      printed_coefficient=False):
    """Density, velocity and pressure of the isentropic vortex.

    The default density coefficient ``(gamma-1) (beta M)^2 / (8 pi^2)`` keeps the
    vortex in radial equilibrium; ``printed_coefficient=True`` uses
    ``0.5 (beta M / pi)^2 (gamma-1)`` instead.
    """
    if mach <= 0 or beta <= 0 or radius <= 0 or gamma <= 1:
        raise ValueError("vortex parameters must be positive with gamma > 1")
    rbar = (1 - x * x - y * y) / (2 * radius**2)
    f = np.exp(rbar)
    if printed_coefficient:
        K = 0.5 * (beta * mach / np.pi) ** 2 * (gamma - 1)
    else:
        K = (gamma - 1) * (beta * mach) ** 2 / (8 * np.pi**2)
    base = 1 - K * f * f
    if np.any(base <= 0):
        raise ValueError("unphysical vortex: density base is not positive")
    rho = base ** (1 / (gamma - 1))
    u = beta * y * f / (2 * np.pi * radius)
    v = 1 - beta * x * f / (2 * np.pi * radius)
    p = rho**gamma / (gamma * mach**2)
    return rho, u, v, p


def euler_vortex_ic(x, y, mach=0.4, beta=13.5, radius=1.5, gamma=1.4,
                    printed_coefficient=False) -> np.ndarray:
    """Conserved variables stacked on a new axis -2 (``(..., 4, n)`` layout)."""
    rho, u, v, p = vortex_primitives(x, y, mach, beta, radius, gamma, printed_coefficient)
    E = p / (gamma - 1) + 0.5 * rho * (u * u + v * v)
    return np.stack([rho, rho * u, rho * v, E], axis=-2)


def _wrap(d, period):
    return d - period * np.round(d / period)


def vortex_exact_density(xy: np.ndarray, t: float, mesh: TriMesh, **params):
    per = mesh.period
    x = _wrap(xy[..., 0], per[0])
    y = _wrap(xy[..., 1] - t, per[1])
    return vortex_primitives(x, y, **params)[0]


def error_norms(rho: np.ndarray, exact, disc: Discretization, strength: int = 23):
    """L1 and L2 density errors by mapped quadrature.

    *rho* holds nodal densities ``(n_elem, N_k)``; *exact* maps physical points
    ``(n_elem, n_q, 2)`` to values.
    """
    rule = volume_quadrature(strength)
    basis = BasisSet(disc.k)
    I = vandermonde(basis, rule.points) @ np.linalg.inv(disc.ops.V)
    xq = disc.mesh.map(rule.points)
    diff = rho @ I.T - exact(xq)
    w = disc.mesh.detJ[:, None] * rule.weights[None, :]
    return float(np.sum(w * np.abs(diff))), float(np.sqrt(np.sum(w * diff**2)))


def convergence_order(errors, n_x, spacing: str = "n_x") -> tuple[float, bool]:
    """Least-squares slope of log(error) against log(h) and a flag that is
    False when the errors do not decrease monotonically.

    ``spacing="n_x"`` takes ``h ~ 1/n_x``, ``spacing="cells"`` the true cell
    width ``h ~ 1/(n_x - 1)``.
    """
    errors = np.asarray(errors, dtype=float)
    n_x = np.asarray(n_x, dtype=float)
    if len(errors) < 3:
        raise ValueError("need at least three mesh levels")
    if spacing not in ("n_x", "cells"):
        raise ValueError(f"unknown spacing {spacing!r}")
    order = np.argsort(n_x)
    e, n = errors[order], n_x[order]
    if spacing == "cells":
        n = n - 1
    slope = np.polyfit(np.log(1 / n), np.log(e), 1)[0]
    monotone = bool(np.all(np.diff(e) < 0))
    if not monotone:
        log.warning("errors are not monotone in n_x: %s", e)
    return float(slope), monotone

# }}}


# {{{ cases

@dataclass
class CaseConfig:
    equation: str = "advection"
    k: int = 3
    n_x: int = 10
    dt: float = 1e-2
    t_final: float = 1.0
    kappa: float = 1.0
    a: tuple = (1.0, 0.5)
    q: tuple = ()
    mach: float = 0.4
    beta: float = 13.5
    radius: float = 1.5
    gamma: float = 1.4
    out_prefix: str = ""
    output_every: int = 1

    def __post_init__(self):
        if self.equation not in ("advection", "euler"):
            raise ValueError(f"unknown equation {self.equation!r}")
        if not 0 <= self.kappa <= 1:
            raise ValueError("kappa must lie in [0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")


_FLOAT_KEYS = {"dt", "t_final", "kappa", "mach", "beta", "radius", "gamma"}
_INT_KEYS = {"k", "n_x", "output_every"}


def parse_config(text: str) -> CaseConfig:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    kw: dict = {}
    qs: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in _FLOAT_KEYS:
            kw[key] = float(val)
        elif key in _INT_KEYS:
            kw[key] = int(val)
        elif key in ("equation", "out_prefix"):
            kw[key] = val
        elif key in ("q0", "q1", "q2", "q3"):
            qs[int(key[1])] = float(val)
        elif key in ("ax", "ay"):
            kw[key] = float(val)
        elif key == "a":
            kw["a"] = tuple(float(v) for v in val.split(","))
        else:
            raise ValueError(f"unknown config key {key!r}")
    if "ax" in kw or "ay" in kw:
        kw["a"] = (kw.pop("ax", 1.0), kw.pop("ay", 0.5))
    if qs:
        kw["q"] = tuple(qs.get(i, 0.0) for i in range(max(qs) + 1))
    return CaseConfig(**kw)


def load_config(path) -> CaseConfig:
    return parse_config(Path(path).read_text())


@dataclass
class RunResult:
    config: CaseConfig
    disc: Discretization
    u: np.ndarray
    times: list
    energy: list
    mass: list
    errors: list


def initial_state(cfg: CaseConfig, disc: Discretization) -> np.ndarray:
    xy = disc.sp_xy
    if cfg.equation == "euler":
        return euler_vortex_ic(xy[..., 0], xy[..., 1], cfg.mach, cfg.beta,
                               cfg.radius, cfg.gamma)
    per = disc.mesh.period
    x0, _, y0, _ = disc.mesh.box
    s = np.sin(2 * np.pi * (xy[..., 0] - x0) / per[0]) * np.sin(2 * np.pi * (xy[..., 1] - y0) / per[1])
    return (1 + 0.5 * s)[:, None, :]


def run_case(cfg: CaseConfig, record_every: int | None = None) -> RunResult:
    mesh = build_mesh(cfg.n_x)
    disc = discretize(mesh, cfg.k, cfg.q or None)
    u = initial_state(cfg, disc)
    every = record_every or cfg.output_every
    params = dict(mach=cfg.mach, beta=cfg.beta, radius=cfg.radius, gamma=cfg.gamma)

    if cfg.equation == "euler":
        rhs = lambda v, t: euler_rhs(v, disc, cfg.gamma, t)
    else:
        rhs = lambda v, t: advection_rhs(v, disc, cfg.a, cfg.kappa)

    def errs(v, t):
        if cfg.equation != "euler":
            return None
        return error_norms(v[:, 0], lambda p: vortex_exact_density(p, t, mesh, **params), disc)

    n_steps = int(round(cfg.t_final / cfg.dt))
    t = 0.0
    times, energy, mass, errors = [0.0], [energy_monitor(u, disc)], [total_mass(u, disc)], [errs(u, 0.0)]
    for step in range(1, n_steps + 1):
        u = rk4_step(u, rhs, cfg.dt, t)
        t = step * cfg.dt
        if step % every == 0 or step == n_steps:
            times.append(t)
            energy.append(energy_monitor(u, disc))
            mass.append(total_mass(u, disc))
            errors.append(errs(u, t))
    return RunResult(cfg, disc, u, times, energy, mass, errors)

# }}}

# vim: foldmethod=marker
