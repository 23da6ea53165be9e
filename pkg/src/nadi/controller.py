"""Tracking controller for non-affine plants.

The controller prescribes target values ``z`` for the differentiated outputs
(a pole-placed error law plus optional integral action) and drives the
implicit control equation ``v(x, u) = z`` by integrating an update law for
``u`` instead of root-finding at every step:

* ``full``          -- gradient-descent term plus inversion term; tracks a
                       moving root of ``v(x, u) = z``.
* ``inverse-free``  -- descent term only; suitable for set-point problems
                       with a sufficiently large solver gain.
* ``pure-inverse``  -- inversion term only; the classical approach obtained
                       by treating du/dt as the new input.

All operations are pure given their inputs; :class:`ControllerState` is a
single-threaded mutable value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DivergenceError,
    EvaluationError,
    RankError,
    ShapeError,
)
from .numerics import finite_diff_jacobian, pseudo_inverse, rk4_step
from .plant import PlantInstance, SystemModel, error_coordinates, eval_v, jacobians

Array = np.ndarray

MODES = ("full", "inverse-free", "pure-inverse")

#: |det(dv/du)| below this fraction of sigma_max^m triggers the
#: pseudo-inverse fallback in the inversion term.
SINGULARITY_RTOL = 1e-10

#: Default anti-windup clamp on each integral accumulator (output units * s).
DEFAULT_INTEGRAL_LIMIT = 100.0


@dataclass(frozen=True)
class ReferenceStack:
    """Reference output values and derivatives, one array per output.

    ``derivs[i][k]`` is the k-th time derivative of reference output i.
    Tracking needs orders 0..alpha_i - 1, the prescribed dynamics needs
    order alpha_i, and its time derivative needs order alpha_i + 1.
    """

    derivs: tuple[Array, ...]

    def order(self, i: int, k: int) -> float:
        d = self.derivs[i]
        if k >= d.size:
            raise ConfigurationError(
                f"reference for output {i} provides derivatives up to order "
                f"{d.size - 1}, but order {k} was requested"
            )
        return float(d[k])

    def heads(self) -> Array:
        """Reference output values (order 0) as a vector."""
        return np.array([d[0] for d in self.derivs])

    def lower_stack(self, alphas: Sequence[int]) -> Array:
        """Derivatives 0 .. alpha_i - 1 of every output, concatenated."""
        parts = []
        for i, (d, a) in enumerate(zip(self.derivs, alphas)):
            if d.size < a:
                raise ConfigurationError(
                    f"reference for output {i} is missing derivatives below order {a}"
                )
            parts.append(d[:a])
        return np.concatenate(parts)

    def at_orders(self, orders: Sequence[int]) -> Array:
        """One chosen derivative order per output, as a vector."""
        out = np.empty(len(orders))
        for i, k in enumerate(orders):
            d = self.derivs[i]
            if k >= d.size:
                raise ConfigurationError(
                    f"reference for output {i} provides derivatives up to order "
                    f"{d.size - 1}, but order {k} was requested"
                )
            out[i] = d[k]
        return out

    @classmethod
    def from_lists(cls, rows: Sequence[Sequence[float]]) -> "ReferenceStack":
        return cls(tuple(np.asarray(r, dtype=float) for r in rows))


@dataclass(frozen=True)
class GainSet:
    """Controller gains.

    ``k_blocks[i]`` holds the error-feedback gains (k_1 .. k_alpha) of output
    i in the negative-feedback convention: the prescribed dynamics subtracts
    ``k_1 e + k_2 e' + ...`` so positive gains give a stable error equation.
    ``k_s`` is the positive-definite solver gain; ``k_integral`` holds the
    per-output integral gains (>= 0).
    """

    k_blocks: tuple[Array, ...]
    k_s: Array
    k_integral: Array

    def __post_init__(self):
        object.__setattr__(
            self, "k_blocks", tuple(np.asarray(k, dtype=float) for k in self.k_blocks)
        )
        object.__setattr__(self, "k_s", np.asarray(self.k_s, dtype=float))
        object.__setattr__(
            self, "k_integral", np.asarray(self.k_integral, dtype=float)
        )
        m = len(self.k_blocks)
        if self.k_s.shape != (m, m):
            raise ConfigurationError(f"k_s must be {m}x{m}")
        if not np.allclose(self.k_s, self.k_s.T, rtol=0.0, atol=1e-9):
            raise ConfigurationError("k_s must be symmetric")
        if np.linalg.eigvalsh(self.k_s)[0] <= 0.0:
            raise ConfigurationError("k_s must be positive-definite")
        if self.k_integral.shape != (m,) or np.any(self.k_integral < 0.0):
            raise ConfigurationError("k_integral must be m non-negative gains")
        for i, k in enumerate(self.k_blocks):
            # characteristic polynomial s^a + k_a s^(a-1) + ... + k_1
            coeffs = np.concatenate(([1.0], k[::-1]))
            roots = np.roots(coeffs)
            if np.any(roots.real >= 0.0):
                raise ConfigurationError(
                    f"gain block {i} does not give a stable error equation "
                    f"(root at {roots[np.argmax(roots.real)]:.6g})"
                )
            if self.k_integral[i] > 0.0:
                aug = np.concatenate(([1.0], k[::-1], [self.k_integral[i]]))
                if np.any(np.roots(aug).real >= 0.0):
                    raise ConfigurationError(
                        f"integral gain {self.k_integral[i]:.6g} destabilizes "
                        f"the error equation of output {i}"
                    )
        # cached layout used on every controller evaluation
        alphas = tuple(k.size for k in self.k_blocks)
        total = sum(alphas)
        kmat = np.zeros((m, total))
        off = 0
        for i, k in enumerate(self.k_blocks):
            kmat[i, off : off + k.size] = k
            off += k.size
        object.__setattr__(self, "_kmat_pos", kmat)
        object.__setattr__(
            self, "_head_idx", np.concatenate(([0], np.cumsum(alphas)[:-1])).astype(int)
        )
        object.__setattr__(self, "_ffdot_orders", tuple(a + 1 for a in alphas))
        iso = float(self.k_s[0, 0])
        is_iso = bool(np.array_equal(self.k_s, iso * np.eye(m)))
        object.__setattr__(self, "_ks_scalar", iso if is_iso else None)

    @property
    def alphas(self) -> tuple[int, ...]:
        return tuple(k.size for k in self.k_blocks)

    @property
    def m(self) -> int:
        return len(self.k_blocks)

    def feedback_matrix(self) -> Array:
        """The m-by-sum(alphas) feedback matrix K with rows -k_blocks[i]."""
        return -self._kmat_pos

    @classmethod
    def from_poles(cls, poles, k_s, k_integral=None) -> "GainSet":
        """Build gains from desired per-output pole sets.

        ``k_s`` may be a positive scalar (expanded to k_s * I) or an m-by-m
        matrix; ``k_integral`` defaults to zero.
        """
        blocks = pole_gains(poles)
        m = len(blocks)
        k_s = np.asarray(k_s, dtype=float)
        if k_s.ndim == 0:
            k_s = float(k_s) * np.eye(m)
        if k_integral is None:
            k_integral = np.zeros(m)
        return cls(blocks, k_s, np.asarray(k_integral, dtype=float))


@dataclass
class ControllerState:
    """Current control vector, integral accumulators, and mode."""

    u: Array
    integral_err: Array
    mode: str = "full"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.integral_err = np.asarray(self.integral_err, dtype=float)
        if self.mode not in MODES:
            raise ConfigurationError(
                f"unknown controller mode '{self.mode}'; expected one of {MODES}"
            )


def build_error_dynamics(alphas: Sequence[int]) -> tuple[Array, Array]:
    """Block-diagonal integrator-chain matrices (A, B) of the error system.

    Each output contributes an alpha_i-by-alpha_i shift block to A (ones on
    the superdiagonal) and a unit last-row column to B.
    """
    alphas = tuple(int(a) for a in alphas)
    if not alphas or any(a < 1 for a in alphas):
        raise ConfigurationError("alphas must be a nonempty list of degrees >= 1")
    total = sum(alphas)
    a_mat = np.zeros((total, total))
    b_mat = np.zeros((total, len(alphas)))
    off = 0
    for i, a in enumerate(alphas):
        for k in range(a - 1):
            a_mat[off + k, off + k + 1] = 1.0
        b_mat[off + a - 1, i] = 1.0
        off += a
    return a_mat, b_mat


def pole_gains(poles) -> tuple[Array, ...]:
    """Gains placing each output's error poles at the requested locations.

    ``poles[i]`` is the pole multiset for output i (size alpha_i, real parts
    negative, complex poles in conjugate pairs). Returns one gain vector
    (k_1 .. k_alpha) per output such that the closed error equation is
    ``e^(a) + k_a e^(a-1) + ... + k_1 e = 0``.
    """
    blocks = []
    for i, pset in enumerate(poles):
        p = np.atleast_1d(np.asarray(pset, dtype=complex))
        if np.any(p.real >= 0.0):
            raise ConfigurationError(
                f"output {i}: poles must lie in the open left half-plane"
            )
        coeffs = np.poly(p)
        scale = np.max(np.abs(coeffs))
        if np.max(np.abs(coeffs.imag)) > 1e-9 * max(scale, 1.0):
            raise ConfigurationError(
                f"output {i}: complex poles must come in conjugate pairs"
            )
        k = coeffs.real[1:][::-1]
        blocks.append(k)
    return tuple(blocks)


def closed_loop_matrix(gains: GainSet) -> Array:
    """Closed-loop error matrix A + B K for the given gains."""
    a_mat, b_mat = build_error_dynamics(gains.alphas)
    return a_mat + b_mat @ gains.feedback_matrix()


def prescribed_z(e_stack, ref: ReferenceStack, integral_err, gains: GainSet) -> Array:
    """Prescribed values for the differentiated outputs.

    Per output: feedforward (the alpha-th reference derivative) minus the
    gain-weighted error stack minus the integral term.
    """
    e_stack = np.asarray(e_stack, dtype=float)
    ff = ref.at_orders(gains.alphas)
    return ff - gains._kmat_pos @ e_stack - gains.k_integral * np.asarray(
        integral_err, dtype=float
    )


def zdot(e_stack, e_stack_dot, ref: ReferenceStack, gains: GainSet) -> Array:
    """Time derivative of the prescribed dynamics.

    Uses the analytic derivative of the error stack (``e_stack_dot``) and the
    reference derivative one order above the feedforward; the integral term
    differentiates to the plain output error, which is the head of each error
    block.
    """
    e_stack = np.asarray(e_stack, dtype=float)
    e_stack_dot = np.asarray(e_stack_dot, dtype=float)
    ff = ref.at_orders(gains._ffdot_orders)
    return ff - gains._kmat_pos @ e_stack_dot - gains.k_integral * e_stack[gains._head_idx]


def residual(model: SystemModel, x, u, z) -> tuple[Array, float]:
    """Solve residual h = v(x, u) - z and its quadratic measure 0.5 h'h."""
    h = eval_v(model, x, u) - np.asarray(z, dtype=float)
    return h, 0.5 * float(h @ h)


def _z_pair(e, e_dot, ff, ffd, heads_err, integral_err, gains: GainSet):
    """Prescribed dynamics and its derivative from pre-extracted reference
    vectors; hot-loop twin of prescribed_z / zdot (asserted equal in tests)."""
    kmat = gains._kmat_pos
    ki = gains.k_integral
    z = ff - kmat @ e - ki * integral_err
    zd = ffd - kmat @ e_dot - ki * heads_err
    return z, zd


def _det_and_regular(j: Array) -> tuple[float, bool]:
    """Determinant plus a scale-aware regularity verdict.

    The matrix counts as singular when |det| < SINGULARITY_RTOL * sigma_max^m.
    The Frobenius norm bounds sigma_max from above, so most matrices pass on
    a cheap test; only borderline cases pay for the exact sigma_max.
    """
    m = j.shape[0]
    flat = j.ravel().tolist()
    if m == 1:
        det = flat[0]
        return det, det != 0.0
    if m == 2:
        a, b, c, d = flat
        det = a * d - b * c
        fro2 = a * a + b * b + c * c + d * d
        if abs(det) >= SINGULARITY_RTOL * fro2:
            return det, True
    elif m == 3:
        a, b, c, d, e, f, g, h, i = flat
        det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
        fro2 = sum(v * v for v in flat)
        if abs(det) >= SINGULARITY_RTOL * fro2 * math.sqrt(fro2):
            return det, True
    else:
        det = float(np.linalg.det(j))
        fro2 = float(np.sum(j * j))
        if abs(det) >= SINGULARITY_RTOL * fro2 ** (0.5 * m):
            return det, True
    if fro2 == 0.0:
        return det, False
    smax = float(np.linalg.norm(j, 2))
    return det, abs(det) >= SINGULARITY_RTOL * smax**m


def _apply_inverse(j: Array, rhs: Array, det: float, regular: bool) -> Array:
    """Solve j @ x = rhs, or least-squares via the pseudo-inverse when
    ``regular`` is false. Closed forms cover the small sizes this library
    actually runs."""
    if not regular:
        return pseudo_inverse(j) @ rhs
    m = j.shape[0]
    if m == 1:
        return rhs / det
    if m == 2:
        a, b, c, d = j.ravel().tolist()
        r0, r1 = rhs.tolist()
        return np.array([(d * r0 - b * r1) / det, (a * r1 - c * r0) / det])
    if m == 3:
        a, b, c, d, e, f, g, h, i = j.ravel().tolist()
        r0, r1, r2 = rhs.tolist()
        x0 = ((e * i - f * h) * r0 - (b * i - c * h) * r1 + (b * f - c * e) * r2) / det
        x1 = (-(d * i - f * g) * r0 + (a * i - c * g) * r1 - (a * f - c * d) * r2) / det
        x2 = ((d * h - e * g) * r0 - (a * h - b * g) * r1 + (a * e - b * d) * r2) / det
        return np.array([x0, x1, x2])
    return np.linalg.solve(j, rhs)


def _solve_inversion(j: Array, rhs: Array) -> Array:
    """Guarded solve of j @ x = rhs with the pseudo-inverse fallback; the
    3x3 fast path shares one flattening between the guard and the solve."""
    if j.shape[0] == 3:
        a, b, c, d, e, f, g, h, i = j.ravel().tolist()
        det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
        fro2 = (
            a * a + b * b + c * c + d * d + e * e + f * f + g * g + h * h + i * i
        )
        if abs(det) >= SINGULARITY_RTOL * fro2 * math.sqrt(fro2):
            r0, r1, r2 = rhs.tolist()
            x0 = ((e * i - f * h) * r0 - (b * i - c * h) * r1 + (b * f - c * e) * r2) / det
            x1 = (-(d * i - f * g) * r0 + (a * i - c * g) * r1 - (a * f - c * d) * r2) / det
            x2 = ((d * h - e * g) * r0 - (a * h - b * g) * r1 + (a * e - b * d) * r2) / det
            return np.array([x0, x1, x2])
    det, regular = _det_and_regular(j)
    return _apply_inverse(j, rhs, det, regular)


def inversion_matrix(dv_du: Array) -> tuple[Array, float, bool]:
    """Inverse of dv/du, falling back to the pseudo-inverse near singularity.

    Returns (matrix, det, fallback_active). The fallback triggers when
    |det| drops below SINGULARITY_RTOL times sigma_max^m, the natural scale
    of the determinant.
    """
    dv_du = np.asarray(dv_du, dtype=float)
    det, regular = _det_and_regular(dv_du)
    if regular:
        return np.linalg.inv(dv_du), det, False
    return pseudo_inverse(dv_du), det, True


def control_derivative(
    model: SystemModel,
    x,
    xdot,
    u,
    z,
    z_dot,
    gains: GainSet,
    mode: str,
    *,
    v: Optional[Array] = None,
    jac: Optional[tuple[Array, Array]] = None,
    check: bool = True,
) -> Array:
    """Control update law du/dt for the selected mode.

    ``xdot`` is the state derivative under the controls actually applied to
    the plant; ``v`` and ``jac`` may be passed in when already evaluated at
    (x, u), and ``check=False`` skips the finite guard (the integrator still
    catches non-finite states). A singular dv/du is not an error here: the
    inversion term falls back to the pseudo-inverse.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown controller mode '{mode}'")
    if jac is None:
        jac = jacobians(model, x, u)
    dv_du, dv_dx = jac
    if check and not (
        math.isfinite(float(dv_du.sum())) and math.isfinite(float(dv_dx.sum()))
    ):
        raise EvaluationError("non-finite Jacobian in control law")

    descent = None
    if mode != "pure-inverse":
        if v is None:
            v = eval_v(model, x, u)
        jt_h = dv_du.T @ (v - z)
        if gains._ks_scalar is not None:
            descent = -gains._ks_scalar * jt_h
        else:
            descent = -(gains.k_s @ jt_h)
        if mode == "inverse-free":
            return descent

    inversion = -_solve_inversion(dv_du, dv_dx @ xdot - z_dot)
    if descent is None:
        return inversion
    return descent + inversion


def make_update_law(gains: GainSet, mode: str):
    """Specialize :func:`control_derivative` for one gain set and mode.

    Returns ``law(v, dv_du, dv_dx, z, z_dot, xdot) -> du/dt`` with all mode
    branching resolved up front; the scenario runner calls this once per
    integrator stage. Semantics are pinned to control_derivative by test.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown controller mode '{mode}'")
    ks_scalar = gains._ks_scalar
    k_s = gains.k_s

    if mode == "inverse-free":
        if ks_scalar is not None:
            return lambda v, dv_du, dv_dx, z, z_dot, xdot: -ks_scalar * (
                dv_du.T @ (v - z)
            )
        return lambda v, dv_du, dv_dx, z, z_dot, xdot: -(k_s @ (dv_du.T @ (v - z)))

    if mode == "pure-inverse":
        return lambda v, dv_du, dv_dx, z, z_dot, xdot: -_solve_inversion(
            dv_du, dv_dx @ xdot - z_dot
        )

    if ks_scalar is not None:

        def law(v, dv_du, dv_dx, z, z_dot, xdot):
            return -ks_scalar * (dv_du.T @ (v - z)) - _solve_inversion(
                dv_du, dv_dx @ xdot - z_dot
            )

    else:

        def law(v, dv_du, dv_dx, z, z_dot, xdot):
            return -(k_s @ (dv_du.T @ (v - z))) - _solve_inversion(
                dv_du, dv_dx @ xdot - z_dot
            )

    return law


def step(
    controller: ControllerState,
    plant: PlantInstance,
    ref: ReferenceStack,
    gains: GainSet,
    dt: float,
    *,
    saturation: Optional[tuple[Array, Array]] = None,
    integral_limit: float = DEFAULT_INTEGRAL_LIMIT,
    u_bound: float = 1e6,
) -> ControllerState:
    """Advance the controller one step against the plant's current state.

    The plant state is held fixed for the step (the joint closed-loop
    integration lives in the scenario runner), so the prescribed value is
    frozen at its current level and the update reduces to the root-seeking
    dynamics for ``v(x, u) = z``. The integral accumulators advance by the
    output error and are clamped to +-integral_limit; ``saturation``
    (lo, hi arrays) is applied to the stored control after integration.
    """
    model = plant.model
    x = plant.state
    e = error_coordinates(model, x, controller.u, ref)
    z = prescribed_z(e, ref, controller.integral_err, gains)
    zero_x = np.zeros(model.n)
    zero_z = np.zeros(model.m)

    def du(_t, u):
        return control_derivative(
            model, x, zero_x, u, z, zero_z, gains, controller.mode
        )

    u_new = rk4_step(du, controller.u, plant.time, dt)

    y_err = model.output(x) - ref.heads()
    integral = np.clip(
        controller.integral_err + y_err * dt, -integral_limit, integral_limit
    )
    if saturation is not None:
        lo, hi = saturation
        u_new = np.clip(u_new, lo, hi)
    if float(np.linalg.norm(u_new)) > u_bound:
        raise DivergenceError("control norm exceeded bound", time=plant.time + dt)
    return ControllerState(u=u_new, integral_err=integral, mode=controller.mode)


def min_gain_bound(dv_du, m_matrix) -> float:
    """Lower bound on the scalar solver gain for the inverse-free mode.

    Evaluates max(eig(M + M')) / (2 min(eig(J J'))) for J = dv/du; a
    diagnostic, not an enforced constraint.
    """
    j = np.asarray(dv_du, dtype=float)
    if j.ndim != 2 or j.shape[0] != j.shape[1]:
        raise ShapeError(f"dv/du must be square, got {j.shape}")
    w_j = np.linalg.eigvalsh(j @ j.T)
    if w_j[0] <= 1e-12 * max(w_j[-1], 1.0):
        raise RankError("dv/du is rank-deficient; gain bound undefined")
    m_sym = np.asarray(m_matrix, dtype=float)
    w_m = np.linalg.eigvalsh(m_sym + m_sym.T)
    return float(w_m[-1] / (2.0 * w_j[0]))


def gain_bound_at(model: SystemModel, x, u, gains: GainSet, *, jac=None) -> float:
    """Evaluate the inverse-free gain bound at the current operating point.

    The curvature matrix couples how the state drift and the prescribed
    dynamics react to the control: (dv/dx - dz/dx) df/du (dv/du)^-1, with
    dz/dx obtained through the lower-derivative chain. The exact bound would
    need the (unknown) root of the control equation, so the current control
    is used as a stand-in.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    dv_du, dv_dx = jacobians(model, x, u) if jac is None else jac
    df_du = finite_diff_jacobian(lambda uu: model.dynamics(x, uu), u)
    dchain_dx = finite_diff_jacobian(lambda xx: model.partial_state_chain(xx, u), x)
    dz_dx = gains.feedback_matrix() @ dchain_dx
    inv, _, fallback = inversion_matrix(dv_du)
    if fallback:
        raise RankError("dv/du is singular at the requested point")
    m_matrix = (dv_dx - dz_dx) @ df_du @ inv
    return min_gain_bound(dv_du, m_matrix)
