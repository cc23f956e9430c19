"""Ground-state calibration of rate models to the critical regime.

The principal eigenpair of the positive operator

    (T psi)(x) = sum_y [a(x, y) / V(x)] psi(y) m(y)

is found by power iteration with sup-norm normalization and
Collatz-Wielandt stopping.  For factorized (marked) models the problem
reduces to the mark-only kernel ``Q(s, s') / v(s)`` against ``nu`` and the
eigenfunction is reported with the ``sum q nu = 1`` normalization.  The
birth kernel is rescaled by ``1/r`` to land exactly on criticality, and the
ground-state transform ``b = a / psi``, ``mbar = psi * m`` is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ModelError, ReducibleKernelError
from .model import Kernel, RateModel, StateSpace, kernel_matrix

__all__ = [
    "GroundState",
    "TransformedModel",
    "ThetaKernel",
    "power_iteration",
    "solve_ground_state",
    "rescale_to_critical",
    "ground_transform",
    "criticality_residual",
    "jump_criticality_residual",
    "theta_kernel",
    "calibrate",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITERS = 100_000
POSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class GroundState:
    """Principal eigenpair (r, psi) plus the per-mark profile when marked."""

    psi: np.ndarray            # per point
    eigenvalue: float
    normalization: str         # "sup" | "mark-nu"
    q: np.ndarray | None = None  # per mark (marked models only)
    iterations: int = 0
    residual: float = 0.0
    bracket: tuple | None = None  # final Collatz-Wielandt (min, max)


@dataclass(frozen=True)
class TransformedModel:
    """Critical model after the ground-state transform.

    ``b`` and ``jump_b`` are dense matrices over the space points; ``mbar``
    is the transformed measure.  For translation-invariant models the
    stencil / factorized structure (needed by the unbounded walkers) is
    carried alongside the dense view.
    """

    space: StateSpace
    b: np.ndarray
    mbar: np.ndarray
    death: np.ndarray
    psi: np.ndarray
    jump_b: np.ndarray | None = None
    # translation-invariant payload (None for generic dense models)
    alpha: dict | None = None           # displacement stencil of b's spatial part
    Q: np.ndarray | None = None         # mark kernel (post-rescale)
    q: np.ndarray | None = None         # per-mark ground state
    v: np.ndarray | None = None         # per-mark death rates

    @property
    def dim(self) -> int | None:
        return self.space.dim

    @property
    def translation_invariant(self) -> bool:
        return self.alpha is not None

    @property
    def marked(self) -> bool:
        return self.Q is not None


@dataclass(frozen=True)
class ThetaKernel:
    """Stochastic mark-transition kernel Theta(s, s') = Q q' / (v q)."""

    theta: np.ndarray
    nu: np.ndarray

    def row_sums(self) -> np.ndarray:
        return self.theta @ self.nu

    def transition_probs(self) -> np.ndarray:
        """Row-stochastic matrix of mark-jump probabilities Theta * nu."""
        return self.theta * self.nu[None, :]


def power_iteration(T: np.ndarray, tol: float, max_iters: int,
                    x0: np.ndarray | None = None, shift: float | None = None):
    """Perron pair of a non-negative matrix by power iteration.

    Iterates the shifted matrix ``T + shift I`` (the diagonal shift breaks
    periodic/bipartite kernels without changing the eigenvector; the shift
    is subtracted from the reported eigenvalue and bracket).  Stops when
    the Collatz-Wielandt bracket ``[min Tx/x, max Tx/x]`` has width below
    ``tol`` relative to the eigenvalue.  Returns
    ``(r, x, iterations, bracket_history)`` with ``x`` sup-normalized.
    """
    n = T.shape[0]
    if shift is None:
        shift = 0.5 * float(np.abs(T).sum(axis=1).max())
    x = np.ones(n) if x0 is None else np.asarray(x0, dtype=float)
    x = x / np.abs(x).max()
    history = []
    for it in range(1, max_iters + 1):
        y = T @ x + shift * x
        ymax = np.abs(y).max()
        if ymax == 0.0:
            raise ReducibleKernelError("kernel annihilates the positive cone")
        floor = POSITIVITY_FLOOR * ymax
        if np.any(y <= floor):
            raise ReducibleKernelError(
                "eigenvector entry below positivity floor; kernel reducible")
        ratios = y / x
        lo, hi = float(ratios.min()) - shift, float(ratios.max()) - shift
        history.append((lo, hi))
        x = y / ymax
        if hi - lo <= tol * max(hi, 1.0):
            r = 0.5 * (lo + hi)
            return r, x, it, history
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(bracket width {history[-1][1] - history[-1][0]:.3e})")


def _mark_death(model: RateModel, space: StateSpace) -> np.ndarray:
    """Per-mark death rates v(s), checking V depends on marks only."""
    if model.death_marks is not None:
        return model.death_marks
    nm = len(space.marks)
    v = np.empty(nm)
    for k, s in enumerate(space.marks):
        vals = [model.death[i] for i, p in enumerate(space.points) if p[1] == s]
        v[k] = vals[0]
        if any(abs(u - vals[0]) > 0 for u in vals):
            raise ModelError("marked model requires V(xi, s) = v(s)")
    return v


def solve_ground_state(model: RateModel, space: StateSpace,
                       tol: float = DEFAULT_TOL,
                       max_iters: int = DEFAULT_MAX_ITERS) -> GroundState:
    """Krein-Rutman pair of the normalized birth operator.

    Marked (factorized) models solve the mark-only problem with kernel
    ``Q(s, s') / v(s)`` against ``nu`` and report ``q`` with
    ``sum q nu = 1``; generic models solve the full per-point problem
    with sup-norm normalization.
    """
    if model.birth.form == "factorized":
        if space.structure != "product":
            raise ModelError("factorized kernel requires a product space")
        alpha_mass = sum(model.birth.stencil.values())
        v = _mark_death(model, space)
        K = (model.birth.Q / v[:, None]) * space.nu[None, :] * alpha_mass
        r, q, iters, history = power_iteration(K, tol, max_iters)
        q = q / float(q @ space.nu)
        resid = np.abs(K @ q - r * q).max() / np.abs(q).max()
        psi = np.array([q[space.marks.index(p[1])] for p in space.points])
        return GroundState(psi=psi, eigenvalue=r, normalization="mark-nu",
                           q=q, iterations=iters, residual=float(resid),
                           bracket=history[-1])
    if model.birth.form == "stencil" and np.ptp(model.death) == 0:
        # homogeneous model: psi is constant and r is the stencil mass / V
        # (exact; the unbounded-window dense view has edge losses and must
        # not be used for the eigenproblem)
        if space.structure not in ("lattice", "product"):
            raise ModelError("stencil kernel requires a lattice space")
        unit = float(space.weights[0])
        r = sum(model.birth.stencil.values()) * unit / float(model.death[0])
        psi = np.ones(space.size)
        return GroundState(psi=psi, eigenvalue=r, normalization="sup",
                           iterations=0, residual=0.0, bracket=(r, r))
    A = kernel_matrix(model.birth, space)
    T = (A * space.weights[None, :]) / model.death[:, None]
    r, psi, iters, history = power_iteration(T, tol, max_iters)
    resid = np.abs(T @ psi - r * psi).max() / np.abs(psi).max()
    return GroundState(psi=psi, eigenvalue=r, normalization="sup",
                       iterations=iters, residual=float(resid),
                       bracket=history[-1])


def rescale_to_critical(model: RateModel, gs: GroundState) -> RateModel:
    """Divide the birth kernel by r so the principal eigenvalue becomes 1.

    The jump kernel and death rates are untouched; a model with r = 1 is
    returned unchanged (same kernel payload).
    """
    if gs.eigenvalue <= 0:
        raise ModelError("ground-state eigenvalue must be positive")
    if gs.eigenvalue == 1.0:
        return model
    return model.with_birth(model.birth.scaled(1.0 / gs.eigenvalue))


def ground_transform(model: RateModel, space: StateSpace,
                     gs: GroundState) -> TransformedModel:
    """Apply b = a / psi, mbar = psi * m to a critical model."""
    psi = np.asarray(gs.psi, dtype=float)
    if np.any(psi <= POSITIVITY_FLOOR * psi.max()):
        raise ModelError("psi entry below positivity floor")
    A = kernel_matrix(model.birth, space)
    b = A / psi[:, None]
    mbar = psi * space.weights
    jump_b = None
    if model.jump is not None:
        jump_b = kernel_matrix(model.jump, space) / psi[:, None]

    alpha = Q = q = v = None
    if model.birth.form == "stencil":
        # psi is constant for a translation-invariant critical model;
        # b's stencil is alpha / psi with that constant.
        c = float(psi[0])
        alpha = {k: val / c for k, val in model.birth.stencil.items()}
    elif model.birth.form == "factorized":
        alpha = dict(model.birth.stencil)
        Q = model.birth.Q.copy()
        q = gs.q.copy()
        v = _mark_death(model, space)
    return TransformedModel(space=space, b=b, mbar=mbar, death=model.death.copy(),
                            psi=psi, jump_b=jump_b, alpha=alpha, Q=Q, q=q, v=v)


def criticality_residual(tm: TransformedModel,
                         space: StateSpace | None = None) -> float:
    """sup_x | sum_y b(x, y) mbar(y) - V(x) |.

    Translation-invariant models use the displacement-sum identity (exact on
    the unbounded lattice, where window edge rows are not meaningful).
    """
    if tm.translation_invariant:
        mass = sum(tm.alpha.values())
        if tm.marked:
            flow = mass * (tm.Q @ (tm.q * tm.space.nu)) / tm.q
            return float(np.abs(flow - tm.v).max())
        # psi constant: mbar weight equals psi * unit weight
        flow = mass * float(tm.psi[0])
        return float(np.abs(flow - tm.death).max())
    return float(np.abs(tm.b @ tm.mbar - tm.death).max())


def jump_criticality_residual(model: RateModel, space: StateSpace,
                              gs: GroundState) -> float:
    """Residual of the jump-extended balance condition.

    sup_x | sum_y (a + J)(x, y) psi(y) m(y)
            - (V(x) + sum_y J(y, x) m(y)) psi(x) |.
    """
    psi = gs.psi
    A = kernel_matrix(model.birth, space)
    J = kernel_matrix(model.jump, space)
    inflow = (A + J) @ (psi * space.weights)
    outflow = (model.death + J.T @ space.weights) * psi
    return float(np.abs(inflow - outflow).max())


def theta_kernel(tm: TransformedModel) -> ThetaKernel:
    """Theta(s, s') = Q(s, s') q(s') / (v(s) q(s)); rows sum to 1 against nu."""
    if not tm.marked:
        raise ModelError("theta_kernel requires a factorized (marked) model")
    alpha_mass = sum(tm.alpha.values())
    theta = alpha_mass * tm.Q * tm.q[None, :] / (tm.v[:, None] * tm.q[:, None])
    return ThetaKernel(theta=theta, nu=tm.space.nu)


def calibrate(model: RateModel, space: StateSpace,
              tol: float = DEFAULT_TOL,
              max_iters: int = DEFAULT_MAX_ITERS):
    """Full pipeline: solve, rescale to r = 1, transform.

    Returns ``(tm, gs_initial, report)`` where ``report`` collects the
    eigenvalue, iteration counts and residuals.
    """
    gs0 = solve_ground_state(model, space, tol=tol, max_iters=max_iters)
    critical = rescale_to_critical(model, gs0)
    gs = solve_ground_state(critical, space, tol=tol, max_iters=max_iters)
    tm = ground_transform(critical, space, gs)
    report = {
        "r_initial": gs0.eigenvalue,
        "r_after_rescale": gs.eigenvalue,
        "iterations": gs0.iterations + gs.iterations,
        "criticality_residual": criticality_residual(tm),
        "normalization": gs.normalization,
    }
    return tm, gs, report
