"""Modified connection, gauge-frame evolution, and identity residuals.

The flat connection on an auxiliary bundle E (a second copy of the tangent
bundle, trivialized by the grid coordinates) is twisted by
alpha (X -| T) x (.) ; together with a frame iota evolving by
beta (Div T) x iota, the gauge-transported torsion satisfies a clean
reaction-diffusion equation for alpha = -1/2, beta = 1/2.  Every residual
evaluator here differences two independently computed sides, so a
vanishing residual under refinement verifies the corresponding identity
numerically rather than by construction.

All curvature terms vanish identically on the flat torus; a non-flat
background is not representable in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import StructureTables, diamond
from .grid import Grid, div2, grad_scalar, grad_vector, laplacian, partial
from .states import (
    IsometricState,
    metric_from_phi,
    phi_of_state,
    psi_of_state,
    torsion_from_phi,
    torsion_of_state,
)

__all__ = [
    "FrameField",
    "FrameDegenerateError",
    "GaugeDriftError",
    "identity_frame",
    "D_derivative",
    "frame_connection_coefficients",
    "laplacian_D",
    "evolve_frame",
    "reaction_diffusion_residual",
    "torsion_evolution_residual",
    "bianchi_residual",
    "lie_derivative_phi",
    "lie_decomposition_residual",
    "first_variation_residual",
    "second_variation_pointwise_defect",
    "second_variation_identity_defect",
    "shrinker_soliton_residual",
    "soliton_residual",
]


class FrameDegenerateError(ValueError):
    """Raised when the frame map iota is (numerically) singular."""


class GaugeDriftError(RuntimeError):
    """Raised when iota^T iota drifts too far from the identity."""


@dataclass(frozen=True)
class FrameField:
    """Pointwise linear map iota: E -> TM, with connection parameters.

    ``iota[m, a]`` is the TM component m of the image of the a-th frame
    section.  alpha twists the connection, beta drives the gauge flow.
    """

    iota: np.ndarray
    alpha: float = -0.5
    beta: float = 0.5

    def orthogonality_defect(self) -> float:
        gram = np.einsum("ma...,mb...->ab...", self.iota, self.iota)
        eye = np.eye(7).reshape((7, 7) + (1,) * (gram.ndim - 2))
        return float(np.max(np.abs(gram - eye)))

    def require_orthogonal(self, tol: float = 1e-8) -> None:
        defect = self.orthogonality_defect()
        if defect > tol:
            raise GaugeDriftError(f"frame orthogonality defect {defect:g} exceeds {tol:g}")


def identity_frame(grid: Grid, alpha: float = -0.5, beta: float = 0.5) -> FrameField:
    iota = np.zeros((7, 7) + grid.shape)
    iota[np.arange(7), np.arange(7)] = 1.0
    return FrameField(iota=iota, alpha=alpha, beta=beta)


def _phi_field(tables: StructureTables, grid: Grid, phi3: np.ndarray | None) -> np.ndarray:
    """The structure 3-form to build cross products from.

    The connection machinery twists by the cross product of the structure
    whose torsion is supplied; for states away from the reference the
    caller passes its 3-form field.  None selects the (constant) reference.
    """
    if phi3 is not None:
        return phi3
    return tables.phi.reshape((7, 7, 7) + (1,) * grid.k).astype(float)


def _inverse_frame(iota: np.ndarray) -> np.ndarray:
    flat = np.moveaxis(iota.reshape(7, 7, -1), -1, 0)
    try:
        inv = np.linalg.inv(flat)
    except np.linalg.LinAlgError as exc:
        raise FrameDegenerateError("frame map is singular") from exc
    return np.moveaxis(inv, 0, -1).reshape(iota.shape)


def D_derivative(
    tables: StructureTables,
    grid: Grid,
    frame: FrameField,
    torsion: np.ndarray,
    direction: int,
    sigma: np.ndarray,
    phi3: np.ndarray | None = None,
) -> np.ndarray:
    """Twisted covariant derivative of a section of E along a coordinate
    direction:  D_dir sigma = iota^{-1}( d_dir (iota sigma)
                                         + alpha (e_dir -| T) x (iota sigma) ),

    with the cross product of the structure whose torsion is ``torsion``
    (3-form field ``phi3``; None means the reference structure).
    """
    phi = _phi_field(tables, grid, phi3)
    v = np.einsum("ma...,a...->m...", frame.iota, sigma)
    dv = partial(grid, v, direction)
    tw = torsion[direction]  # (e_dir -| T)_m = T_{dir m}
    dv = dv + frame.alpha * np.einsum("mlp...,m...,l...->p...", phi, tw, v)
    inv = _inverse_frame(frame.iota)
    return np.einsum("am...,m...->a...", inv, dv)


def frame_connection_coefficients(
    tables: StructureTables,
    grid: Grid,
    frame: FrameField,
    torsion: np.ndarray,
    direction: int,
    phi3: np.ndarray | None = None,
) -> np.ndarray:
    """Coefficients G[b, a] with D_dir v_a = G[b, a] v_b for the frame sections."""
    phi = _phi_field(tables, grid, phi3)
    diota = partial(grid, frame.iota, direction)
    tw = torsion[direction]
    diota = diota + frame.alpha * np.einsum(
        "mlp...,m...,la...->pa...", phi, tw, frame.iota
    )
    inv = _inverse_frame(frame.iota)
    return np.einsum("bm...,ma...->ba...", inv, diota)


def laplacian_D(
    tables: StructureTables,
    grid: Grid,
    frame: FrameField,
    torsion: np.ndarray,
    a2: np.ndarray,
    alpha: float | None = None,
    phi3: np.ndarray | None = None,
) -> np.ndarray:
    """Connection Laplacian of the mixed tensor A~ = (id x iota)* A.

    Evaluates, in the mixed frame (tangent index i, bundle index a):

        (Lap_D A~)_ia = (Lap A)_ip iota_pa
            - alpha^2 [ |T|^2 A_ip - (A o T^t o T)_ip ] iota_pa
            - 2 alpha (d_k A_ip) T_km iota_la phi_mlp
            - alpha A_ip (Div T)_m iota_la phi_mlp.
    """
    if alpha is None:
        alpha = frame.alpha
    phi = _phi_field(tables, grid, phi3)
    iota = frame.iota
    lap = laplacian(grid, a2)
    out = np.einsum("ip...,pa...->ia...", lap, iota)
    if alpha != 0.0:
        tsq = np.einsum("km...,km...->...", torsion, torsion)
        ttt = np.einsum("kq...,kp...->qp...", torsion, torsion)  # (T^t T)_qp
        quad = tsq * a2 - np.einsum("iq...,qp...->ip...", a2, ttt)
        out -= alpha * alpha * np.einsum("ip...,pa...->ia...", quad, iota)
        for dim in grid.active_dims:
            da = partial(grid, a2, dim)
            w = np.einsum("m...,mlp...->lp...", torsion[dim], phi)
            out -= 2.0 * alpha * np.einsum("ip...,la...,lp...->ia...", da, iota, w)
        divt = div2(grid, torsion)
        w = np.einsum("m...,mlp...->lp...", divt, phi)
        out -= alpha * np.einsum("ip...,la...,lp...->ia...", a2, iota, w)
    return out


def evolve_frame(
    tables: StructureTables,
    grid: Grid,
    frame: FrameField,
    div_torsion: np.ndarray,
    dt: float,
    integrator: str = "rk4",
    phi3: np.ndarray | None = None,
) -> FrameField:
    """Advance iota by d(iota)/dt = beta (Div T) x iota, columnwise.

    Div T is held fixed over the step (the caller supplies the field at the
    appropriate time).  Orthogonality is re-checked, not projected; drift
    beyond 1e-6 raises GaugeDriftError.
    """
    phi = _phi_field(tables, grid, phi3)

    def rate(io):
        return frame.beta * np.einsum(
            "mlp...,m...,la...->pa...", phi, div_torsion, io
        )

    io = frame.iota
    if integrator == "euler":
        io1 = io + dt * rate(io)
    elif integrator == "rk4":
        k1 = rate(io)
        k2 = rate(io + 0.5 * dt * k1)
        k3 = rate(io + 0.5 * dt * k2)
        k4 = rate(io + dt * k3)
        io1 = io + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown integrator {integrator!r}")
    out = FrameField(iota=io1, alpha=frame.alpha, beta=frame.beta)
    defect = out.orthogonality_defect()
    if defect > 1e-6:
        raise GaugeDriftError(f"gauge drift {defect:g} after one step")
    return out


def _require_snapshots(traj, minimum: int = 3) -> None:
    count = len(traj.states if traj.states is not None else traj.phis or [])
    if count < minimum:
        raise ValueError(f"need at least {minimum} stored snapshots, have {count}")


def reaction_diffusion_residual(
    tables: StructureTables,
    traj,
    index: int | None = None,
    alpha: float = -0.5,
) -> np.ndarray:
    """Residual of the reaction-diffusion equation for the gauge-transported
    torsion T~ = T . iota at one interior snapshot:

        resid = dT~/dt - Lap_D T~ - alpha^2 ( |T~|^2 T~ - T o T^t o T~ ).

    The time derivative is a centered difference of stored snapshots; the
    trajectory must carry co-evolved frames.
    """
    _require_snapshots(traj)
    if traj.frames is None:
        raise ValueError("trajectory has no co-evolved frames (set track_frame)")
    if index is None:
        index = len(traj.states) // 2
    if not 0 < index < len(traj.states) - 1:
        raise ValueError("index must be interior for centered differences")
    grid = traj.grid

    def mixed(j):
        t = torsion_of_state(tables, traj.states[j])
        return t, np.einsum("im...,ma...->ia...", t, traj.frames[j])

    t_prev, m_prev = mixed(index - 1)
    t_mid, m_mid = mixed(index)
    t_next, m_next = mixed(index + 1)
    dt2 = traj.times[index + 1] - traj.times[index - 1]
    dmdt = (m_next - m_prev) / dt2

    frame = FrameField(iota=traj.frames[index], alpha=alpha)
    phi_mid = phi_of_state(tables, traj.states[index])
    lap = laplacian_D(tables, grid, frame, t_mid, t_mid, alpha=alpha, phi3=phi_mid)
    msq = np.einsum("ia...,ia...->...", m_mid, m_mid)
    ttm = np.einsum("ip...,kp...->ik...", t_mid, t_mid)  # (T T^t)_ik
    reaction = alpha * alpha * (msq * m_mid - np.einsum("ik...,ka...->ia...", ttm, m_mid))
    return dmdt - lap - reaction


def torsion_evolution_residual(
    tables: StructureTables,
    traj,
    index: int | None = None,
    include_gradient_term: bool = True,
) -> np.ndarray:
    """Residual of the torsion evolution equation at one interior snapshot:

        resid_pq = dT/dt - Lap T_pq + (d_i T_pb) T_ia phi_abq.

    Dropping the gradient term is the negative control.
    """
    _require_snapshots(traj)
    if index is None:
        index = len(traj.states) // 2
    if not 0 < index < len(traj.states) - 1:
        raise ValueError("index must be interior for centered differences")
    grid = traj.grid
    t_prev = torsion_of_state(tables, traj.states[index - 1])
    t_mid = torsion_of_state(tables, traj.states[index])
    t_next = torsion_of_state(tables, traj.states[index + 1])
    dt2 = traj.times[index + 1] - traj.times[index - 1]
    resid = (t_next - t_prev) / dt2 - laplacian(grid, t_mid)
    if include_gradient_term:
        phi_mid = phi_of_state(tables, traj.states[index])
        for dim in grid.active_dims:
            dtm = partial(grid, t_mid, dim)
            resid += np.einsum("pb...,a...,abq...->pq...", dtm, t_mid[dim], phi_mid)
    return resid


def bianchi_residual(
    tables: StructureTables,
    grid: Grid,
    torsion: np.ndarray,
    phi3: np.ndarray | None = None,
) -> np.ndarray:
    """First-order torsion identity residual on the flat background:

        resid_ijk = d_i T_jk - d_j T_ik - T_ia T_jb phi_abk,

    with phi the 3-form of the structure the torsion belongs to.
    """
    phi = _phi_field(tables, grid, phi3)
    gt = np.zeros((7,) + torsion.shape)
    for dim in grid.active_dims:
        gt[dim] = partial(grid, torsion, dim)
    resid = gt - np.swapaxes(gt, 0, 1)
    resid -= np.einsum("ia...,jb...,abk...->ijk...", torsion, torsion, phi)
    return resid


def lie_derivative_phi(grid: Grid, y: np.ndarray, phi3: np.ndarray) -> np.ndarray:
    """Coordinate Lie derivative of a 3-form field along a vector field:

    (L_Y phi)_ijk = Y_m d_m phi_ijk + (d_i Y_m) phi_mjk
                    + (d_j Y_m) phi_imk + (d_k Y_m) phi_ijm.
    """
    out = np.zeros_like(phi3)
    for dim in grid.active_dims:
        out += y[dim] * partial(grid, phi3, dim)
    gy = grad_vector(grid, y)
    out += np.einsum("im...,mjk...->ijk...", gy, phi3)
    out += np.einsum("jm...,imk...->ijk...", gy, phi3)
    out += np.einsum("km...,ijm...->ijk...", gy, phi3)
    return out


def lie_decomposition_residual(
    tables: StructureTables, state: IsometricState, y: np.ndarray
) -> np.ndarray:
    """Residual of the Lie-derivative decomposition for the state's 3-form:

        L_Y phi - [ (Y -| T - curl(Y)/2) -| psi + (1/2)(L_Y g) <> phi ],

    with curl(Y)_m = (d_i Y_j) phi_ijm taken for the state's own 3-form.
    """
    grid = state.grid
    phi3 = phi_of_state(tables, state)
    psi4 = psi_of_state(tables, state)
    torsion = torsion_of_state(tables, state)
    lhs = lie_derivative_phi(grid, y, phi3)

    gy = grad_vector(grid, y)
    y_t = np.einsum("l...,lp...->p...", y, torsion)
    curl = np.einsum("ij...,ijm...->m...", gy, phi3)
    vec = y_t - 0.5 * curl
    rhs = np.einsum("p...,pijk...->ijk...", vec, psi4)
    lyg = gy + np.swapaxes(gy, 0, 1)
    rhs += 0.5 * diamond(tables, lyg, phi3)
    return lhs - rhs


def first_variation_residual(
    tables: StructureTables,
    state: IsometricState,
    v: np.ndarray,
    eps: float = 1e-4,
) -> np.ndarray:
    """Centered difference of the torsion under phi -> phi + eps (V -| psi),
    minus the first-variation formula  d_i V_j + V_l T_im phi_lmj.

    The perturbed forms leave the isometric class only at O(eps^2) and the
    symmetric error cancels in the central difference; the flat Hodge star
    is used throughout (metric re-projection).
    """
    grid = state.grid
    phi3 = phi_of_state(tables, state)
    psi4 = psi_of_state(tables, state)
    torsion = torsion_of_state(tables, state)
    pert = np.einsum("p...,pijk...->ijk...", v, psi4)
    # raises DegenerateFormError if eps pushed the form out of the cone
    metric_from_phi(tables, grid, phi3 + eps * pert)
    t_plus = torsion_from_phi(tables, grid, phi3 + eps * pert, metric_tol=None)
    t_minus = torsion_from_phi(tables, grid, phi3 - eps * pert, metric_tol=None)
    numeric = (t_plus - t_minus) / (2.0 * eps)
    analytic = grad_vector(grid, v) + np.einsum(
        "l...,im...,lmj...->ij...", v, torsion, phi3
    )
    return numeric - analytic


def second_variation_pointwise_defect(
    tables: StructureTables,
    grad_x: np.ndarray,
    torsion: np.ndarray,
    x: np.ndarray,
) -> np.ndarray:
    """Pointwise defect of the twisted-gradient identity

        |D X|^2 = |grad X|^2 - T_km (grad X)_kp phi_mlp X_l
                  + (1/4)(|T|^2 |X|^2 - (T^t o T)(X, X)),

    with (D X)_kp = (grad X)_kp - (1/2) T_km X_l phi_mlp.  The identity is
    algebraic and holds for arbitrary (grad X, T, X) triples.
    """
    twist = np.einsum("km...,l...,mlp->kp...", torsion, x, tables.phi)
    dx = grad_x - 0.5 * twist
    lhs = np.einsum("kp...,kp...->...", dx, dx)
    rhs = np.einsum("kp...,kp...->...", grad_x, grad_x)
    rhs -= np.einsum("km...,kp...,l...,mlp->...", torsion, grad_x, x, tables.phi)
    tsq = np.einsum("km...,km...->...", torsion, torsion)
    xsq = np.einsum("l...,l...->...", x, x)
    ttxx = np.einsum("km...,kl...,m...,l...->...", torsion, torsion, x, x)
    rhs += 0.25 * (tsq * xsq - ttxx)
    return lhs - rhs


def second_variation_identity_defect(
    tables: StructureTables,
    grid: Grid,
    x: np.ndarray,
    torsion: np.ndarray,
) -> np.ndarray:
    """Field version of the pointwise identity, with grad X from the grid."""
    return second_variation_pointwise_defect(tables, grad_vector(grid, x), torsion, x)


def shrinker_soliton_residual(
    tables: StructureTables,
    state: IsometricState,
    center: tuple[int, ...],
    t0: float,
    t: float,
) -> np.ndarray:
    """Residual of the Euclidean shrinker equation

        Div T - (x - x0) / (2 (t0 - t)) -| T,

    with the displacement lifted periodically to (-L/2, L/2] per active
    dimension.
    """
    if t >= t0:
        raise ValueError("shrinker residual requires t < t0")
    grid = state.grid
    torsion = torsion_of_state(tables, state)
    divt = div2(grid, torsion)
    scale = 0.5 / (t0 - t)
    pulled = np.zeros(torsion.shape[1:])
    for pos, dim in enumerate(grid.active_dims):
        w = grid.lifted_displacement(dim, center[pos]) * scale
        pulled = pulled + w * torsion[dim]
    return divt - pulled


def soliton_residual(
    tables: StructureTables, state: IsometricState, x0: np.ndarray
) -> np.ndarray:
    """General soliton residual for a candidate vector field X0:

        Div T - ( -(1/2) curl X0 + X0 -| T ),

    with curl taken for the state's own 3-form.
    """
    grid = state.grid
    phi3 = phi_of_state(tables, state)
    torsion = torsion_of_state(tables, state)
    divt = div2(grid, torsion)
    gx0 = grad_vector(grid, x0)
    curl = np.einsum("ij...,ijm...->m...", gx0, phi3)
    pulled = np.einsum("l...,lq...->q...", x0, torsion)
    return divt - (-0.5 * curl + pulled)
