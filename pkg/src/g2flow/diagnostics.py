"""Scalar functionals and monotonicity machinery for the flow.

Energy, the backwards heat kernel on the torus (wrapped-Gaussian image
sums), the parabolically scale-invariant localized energy, the entropy
functional, the localized-energy evolution identity split into its
gradient and kernel-Hessian terms, a quantitative decay-rate fit, and the
bounded-quantity monitors.

The kernel is a product of one-dimensional wrapped Gaussians over the
active directions; the inactive directions are integrated out analytically
(each contributes a factor 1/L after normalization over the torus, and an
exponentially small Hessian correction handled in closed form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import StructureTables
from .grid import Grid, div2, integrate, partial
from .states import IsometricState, torsion_of_state

__all__ = [
    "HeatKernelSpec",
    "energy",
    "sup_norm",
    "heat_kernel",
    "grad_log_kernel",
    "theta",
    "monotonicity_terms",
    "monotonicity_residual",
    "entropy",
    "decay_rate",
    "interpolation_monitor",
    "shi_monitor",
    "doubling_monitor",
    "record_for_state",
    "record_for_torsion",
]

UNIT_BALL_VOLUME_7D = 16.0 * math.pi**3 / 105.0


@dataclass(frozen=True)
class HeatKernelSpec:
    """Backwards heat kernel centered at a grid point, final time t0.

    ``center`` holds one grid index per active dimension.  ``image_radius``
    is the minimum wrapped-Gaussian truncation radius in periods; the sum
    is automatically extended whenever more images are needed to keep the
    kernel mass within 1e-8 of 1.
    """

    center: tuple[int, ...]
    t0: float
    image_radius: int = 3


def energy(grid: Grid, torsion: np.ndarray) -> float:
    """E = (1/2) * integral of |T|^2 over the torus."""
    return 0.5 * integrate(grid, np.einsum("pq...,pq...->...", torsion, torsion))


def sup_norm(tensor: np.ndarray) -> float:
    """Pointwise-norm sup of a tensor field (full component sum).

    Leading axes of size 7 are tensor slots, the rest grid axes; grids
    always have an even number of points so the split is unambiguous.
    """
    if tensor.ndim == 0:
        return float(np.abs(tensor))
    n_tensor = 0
    for s in tensor.shape:
        if s == 7:
            n_tensor += 1
        else:
            break
    sq = np.sum(tensor * tensor, axis=tuple(range(n_tensor))) if n_tensor else tensor * tensor
    return float(np.sqrt(np.max(sq)))


def _auto_radius(length: float, tau: float, radius: int) -> int:
    # keep exp(-((R-1/2) L)^2 / 4 tau) below ~1e-20
    need = int(math.ceil((math.sqrt(184.0 * tau) / length) + 0.5)) + 1
    return max(radius, need)


def _wrapped_parts(length: float, tau: float, d: np.ndarray, radius: int):
    """1-D wrapped Gaussian w(d) and its first two derivatives."""
    r = _auto_radius(length, tau, radius)
    norm = 1.0 / math.sqrt(4.0 * math.pi * tau)
    w = np.zeros_like(d)
    wp = np.zeros_like(d)
    wpp = np.zeros_like(d)
    for image in range(-r, r + 1):
        z = d + image * length
        g = norm * np.exp(-z * z / (4.0 * tau))
        w += g
        wp += -(z / (2.0 * tau)) * g
        wpp += (z * z / (4.0 * tau * tau) - 1.0 / (2.0 * tau)) * g
    return w, wp, wpp


def _axis_displacement(grid: Grid, center_index: int) -> np.ndarray:
    d = ((np.arange(grid.n) - center_index) % grid.n) * grid.h
    return np.where(d > grid.length / 2, d - grid.length, d)


def _kernel_axes(grid: Grid, spec: HeatKernelSpec, t: float):
    tau = spec.t0 - t
    if tau <= 0:
        raise ValueError("kernel requires t < t0")
    if len(spec.center) != grid.k:
        raise ValueError("kernel center needs one index per active dimension")
    axes = []
    for pos in range(grid.k):
        d = _axis_displacement(grid, spec.center[pos])
        axes.append(_wrapped_parts(grid.length, tau, d, spec.image_radius))
    return tau, axes


def _broadcast_axis(grid: Grid, pos: int, arr1d: np.ndarray) -> np.ndarray:
    shape = [1] * grid.k
    shape[pos] = grid.n
    return arr1d.reshape(shape)


def heat_kernel(grid: Grid, spec: HeatKernelSpec, t: float) -> np.ndarray:
    """Kernel values on the grid; mass-normalized to 1 over the torus."""
    tau, axes = _kernel_axes(grid, spec, t)
    u = np.full(grid.shape, grid.length ** -(7 - grid.k))
    for pos, (w, _, _) in enumerate(axes):
        u = u * _broadcast_axis(grid, pos, w)
    return u


def grad_log_kernel(grid: Grid, spec: HeatKernelSpec, t: float) -> np.ndarray:
    """grad f with u = exp(-f) / (4 pi (t0-t))^(7/2); zero on inactive dims."""
    tau, axes = _kernel_axes(grid, spec, t)
    out = grid.zeros(1)
    for pos, (w, wp, _) in enumerate(axes):
        dim = grid.active_dims[pos]
        out[dim] = np.broadcast_to(
            _broadcast_axis(grid, pos, -wp / w), grid.shape
        )
    return out


def theta(grid: Grid, torsion: np.ndarray, spec: HeatKernelSpec, t: float) -> float:
    """Localized energy (t0 - t) * integral |T|^2 u."""
    tau = spec.t0 - t
    if tau <= 0:
        raise ValueError("localized energy requires t < t0")
    u = heat_kernel(grid, spec, t)
    return tau * integrate(grid, np.einsum("pq...,pq...->...", torsion, torsion) * u)


def _inactive_hessian_integral(length: float, tau: float, radius: int, m: int = 4096) -> float:
    """I = 1/(2 tau) - int_0^L w'^2 / w  (exponentially small for tau << L^2)."""
    d = (np.arange(m) + 0.5) * length / m - length / 2
    w, wp, _ = _wrapped_parts(length, tau, d, radius)
    j = float(np.sum(wp * wp / w)) * length / m
    return 1.0 / (2.0 * tau) - j


def monotonicity_terms(
    grid: Grid,
    torsion: np.ndarray,
    spec: HeatKernelSpec,
    t: float,
) -> dict:
    """Gradient and kernel-Hessian terms of the localized-energy identity.

    Returns the two integrals whose sum is d(theta)/dt on the flat torus:

        term1 = -2 (t0-t) int |Div T - grad f -| T|^2 u
        term2 = -2 (t0-t) int T_lq T_pq (H u)_pl ,

    with the Hessian factor of the product kernel reduced per direction;
    inactive directions contribute in closed form.
    """
    tau, axes = _kernel_axes(grid, spec, t)
    u = np.full(grid.shape, grid.length ** -(7 - grid.k))
    eta = {}
    gradf = grid.zeros(1)
    for pos, (w, wp, wpp) in enumerate(axes):
        dim = grid.active_dims[pos]
        u = u * _broadcast_axis(grid, pos, w)
        gradf[dim] = np.broadcast_to(_broadcast_axis(grid, pos, -wp / w), grid.shape)
        eta[dim] = _broadcast_axis(
            grid, pos, wpp / w - (wp / w) ** 2 + 1.0 / (2.0 * tau)
        )
    i_eta = _inactive_hessian_integral(grid.length, tau, spec.image_radius)
    j_eta = 1.0 / (2.0 * tau) - i_eta

    divt = div2(grid, torsion)
    pulled = np.einsum("p...,pq...->q...", gradf, torsion)
    resid = divt - pulled
    term1 = -2.0 * tau * integrate(grid, np.einsum("q...,q...->...", resid, resid) * u)

    tt_diag = np.einsum("pq...,pq...->p...", torsion, torsion)  # (T T^t)_pp
    inactive_mass = 0.0
    term2 = 0.0
    for p in range(7):
        if p in grid.active_dims:
            term2 += -2.0 * tau * integrate(grid, tt_diag[p] * eta[p] * u)
        else:
            inactive_mass += integrate(grid, tt_diag[p] * u)
    term2 += -2.0 * tau * i_eta * inactive_mass
    term1 += -2.0 * tau * j_eta * inactive_mass
    return {
        "term1": term1,
        "term2": term2,
        "hessian_correction": abs(term2),
    }


def monotonicity_residual(
    tables: StructureTables, traj, spec: HeatKernelSpec
) -> list[dict]:
    """Centered d(theta)/dt minus the identity's right-hand side, per snapshot.

    ``traj`` needs at least three stored states; entries are produced for
    the interior snapshot times.
    """
    if traj.states is None or len(traj.states) < 3:
        raise ValueError("need at least 3 stored states for centered time differences")
    grid = traj.grid
    torsions = [torsion_of_state(tables, s) for s in traj.states]
    thetas = [theta(grid, T, spec, tm) for T, tm in zip(torsions, traj.times)]
    out = []
    for j in range(1, len(torsions) - 1):
        dt2 = traj.times[j + 1] - traj.times[j - 1]
        dtheta = (thetas[j + 1] - thetas[j - 1]) / dt2
        terms = monotonicity_terms(grid, torsions[j], spec, traj.times[j])
        out.append(
            {
                "t": traj.times[j],
                "dtheta_dt": dtheta,
                "term1": terms["term1"],
                "term2": terms["term2"],
                "residual": dtheta - terms["term1"] - terms["term2"],
                "hessian_correction": terms["hessian_correction"],
                "theta": thetas[j],
            }
        )
    return out


@dataclass(frozen=True)
class EntropyResult:
    value: float
    center: tuple[int, ...]
    scale: float


def entropy(
    grid: Grid,
    torsion: np.ndarray,
    sigma: float,
    sample_stride: int = 2,
    n_scales: int = 12,
    image_radius: int = 3,
    scale_floor: float = 0.01,
) -> EntropyResult:
    """Sampled maximization of t * int |T|^2 u_(x,t)(., 0) over centers and
    scales t in (0, sigma].

    The returned value is a lower bound for the true maximum; the argmax is
    reported so callers can refine locally.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    tsq = np.einsum("pq...,pq...->...", torsion, torsion)
    scales = np.geomspace(scale_floor * sigma, sigma, n_scales)
    best = EntropyResult(0.0, (0,) * grid.k, float(scales[-1]))
    import itertools

    centers = itertools.product(range(0, grid.n, sample_stride), repeat=grid.k)
    for center in centers:
        for tau in scales:
            spec = HeatKernelSpec(center=center, t0=float(tau), image_radius=image_radius)
            u = heat_kernel(grid, spec, 0.0)
            val = float(tau) * integrate(grid, tsq * u)
            if val > best.value:
                best = EntropyResult(val, tuple(center), float(tau))
    return best


def decay_rate(times, div_l2_series, sup_series, length: float) -> dict:
    """Least-squares exponential decay rate of int |Div T|^2.

    Valid only while sup|T|^2 <= Lambda/14 with Lambda = (2 pi / L)^2 the
    first nonzero rough-Laplacian eigenvalue; otherwise reports that the
    hypothesis is not met.
    """
    lam = (2.0 * math.pi / length) ** 2
    sup_sq = max(float(s) ** 2 for s in sup_series)
    if sup_sq > lam / 14.0:
        return {"hypothesis_ok": False, "sup_T_sq": sup_sq, "bound": lam / 14.0}
    vals = np.asarray(div_l2_series, dtype=float)
    ts = np.asarray(times, dtype=float)
    mask = vals > 0
    if mask.sum() < 2:
        return {"hypothesis_ok": True, "rate": None, "reason": "divergence identically zero"}
    slope, _ = np.polyfit(ts[mask], np.log(vals[mask]), 1)
    return {
        "hypothesis_ok": True,
        "rate": -float(slope),
        "threshold": lam / 2.0,
        "lambda": lam,
    }


def interpolation_monitor(grid: Grid, torsion: np.ndarray, grad_torsion: np.ndarray, eps: float) -> dict:
    """Check the contrapositive of 'small energy forces small torsion'.

    If sup|T| > eps anywhere, the energy must exceed the explicit bound
    delta(eps, C, v0) = v0 eps^8 / (8 (2C)^7) with C = sup|grad T|.
    """
    e = energy(grid, torsion)
    sup_t = sup_norm(torsion)
    sup_gt = sup_norm(grad_torsion)
    v0 = UNIT_BALL_VOLUME_7D * min(1.0, grid.length / 2.0) ** 7
    c = max(sup_gt, 1e-30)
    delta = v0 * eps**8 / (8.0 * (2.0 * c) ** 7)
    consistent = bool(sup_t <= eps or e >= delta)
    return {
        "consistent": consistent,
        "energy": e,
        "sup_T": sup_t,
        "sup_grad_T": sup_gt,
        "delta_bound": delta,
        "eps": eps,
    }


def _grad_tensor(grid: Grid, tensor: np.ndarray) -> np.ndarray:
    out = np.zeros((len(grid.active_dims),) + tensor.shape)
    for pos, dim in enumerate(grid.active_dims):
        out[pos] = partial(grid, tensor, dim)
    return out


def shi_monitor(tables: StructureTables, traj) -> list[dict]:
    """Scale-invariant derivative quantities sup|grad^m T| t^(m/2) / sup|T(0)|."""
    grid = traj.grid
    t0_sup = None
    out = []
    for state, tm in zip(traj.states, traj.times):
        torsion = torsion_of_state(tables, state)
        if t0_sup is None:
            t0_sup = max(sup_norm(torsion), 1e-300)
        g1 = _grad_tensor(grid, torsion)
        g2 = _grad_tensor(grid, g1)
        m1 = float(np.sqrt(np.max(np.sum(g1 * g1, axis=(0, 1, 2)))))
        m2 = float(np.sqrt(np.max(np.sum(g2 * g2, axis=(0, 1, 2, 3)))))
        out.append(
            {
                "t": tm,
                "m1": m1 * math.sqrt(max(tm, 0.0)) / t0_sup,
                "m2": m2 * max(tm, 0.0) / t0_sup,
            }
        )
    return out


def doubling_monitor(times, sup_series) -> dict:
    """First time sup|T| exceeds twice its initial value, with the implied
    empirical constant in t_double >= 1/(C sup|T(0)|^2)."""
    sup0 = float(sup_series[0])
    if sup0 <= 0:
        return {"sup_T0": sup0, "doubled": False}
    for tm, s in zip(times, sup_series):
        if s > 2.0 * sup0 and tm > 0:
            return {
                "sup_T0": sup0,
                "doubled": True,
                "t_double": tm,
                "empirical_C": 1.0 / (tm * sup0 * sup0),
            }
    return {"sup_T0": sup0, "doubled": False}


def record_for_torsion(
    grid: Grid,
    torsion: np.ndarray,
    t: float,
    constraint_defect: float,
    theta_probes=(),
    entropy_sigma: float | None = None,
    sup_t_reference: float | None = None,
) -> dict:
    divt = div2(grid, torsion)
    rec = {
        "t": t,
        "energy": energy(grid, torsion),
        "sup_T": sup_norm(torsion),
        "div_T_l2": integrate(grid, np.einsum("q...,q...->...", divt, divt)),
        "constraint_defect": constraint_defect,
    }
    thetas = []
    for center, t0 in theta_probes:
        spec = HeatKernelSpec(center=tuple(center), t0=float(t0))
        if t < t0:
            thetas.append([list(center), float(t0), theta(grid, torsion, spec, t)])
    if thetas:
        rec["theta"] = thetas
    if entropy_sigma is not None:
        rec["entropy_estimate"] = entropy(
            grid, torsion, entropy_sigma, sample_stride=max(1, grid.n // 8)
        ).value
    if sup_t_reference and sup_t_reference > 0 and t > 0:
        g1 = _grad_tensor(grid, torsion)
        g2 = _grad_tensor(grid, g1)
        rec["shi_quantities"] = {
            "m1": float(np.sqrt(np.max(np.sum(g1 * g1, axis=(0, 1, 2)))))
            * math.sqrt(t)
            / sup_t_reference,
            "m2": float(np.sqrt(np.max(np.sum(g2 * g2, axis=(0, 1, 2, 3)))))
            * t
            / sup_t_reference,
        }
    return rec


def record_for_state(
    tables: StructureTables,
    state: IsometricState,
    theta_probes=(),
    entropy_sigma: float | None = None,
    sup_t_reference: float | None = None,
) -> dict:
    torsion = torsion_of_state(tables, state)
    return record_for_torsion(
        state.grid,
        torsion,
        t=state.t,
        constraint_defect=state.constraint_defect(),
        theta_probes=theta_probes,
        entropy_sigma=entropy_sigma,
        sup_t_reference=sup_t_reference,
    )
