"""3-DOF point-mass aircraft for outer-loop trajectory control.

State is (x, y, h, V, chi, gamma): inertial position, speed, heading angle,
and flight-path angle. Controls are (alpha, mu, eta): angle of attack,
velocity bank angle, and throttle. Sideslip is assumed regulated to zero by
the inner loop; the residual lateral thrust/side-force effects are modeled
as an injectable disturbance. Angles are radians everywhere in this module.

The force decomposition used throughout: f_t acts along the velocity vector
(thrust minus drag), f_n in the lift plane (lift plus the thrust component
normal to the velocity), and f_y laterally (the disturbance). Bank angle mu
rotates f_n and f_y about the velocity vector; gravity only enters the
speed/path equations and cancels exactly from the horizontal accelerations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import SingularityError, TrimError
from .plant import SystemModel, register_plant

Array = np.ndarray

# Aircraft state/control layout and which entries are angles (for CLI and
# CSV unit conversion; everything internal is radians).
STATE_FIELDS = ("x", "y", "h", "V", "chi", "gamma")
CONTROL_FIELDS = ("alpha", "mu", "eta")
STATE_ANGLE_IDX = (4, 5)
CONTROL_ANGLE_IDX = (0, 1)

#: Default command saturation: alpha in [-5, 20] deg, mu in [-60, 60] deg,
#: eta in [0, 1].
DEFAULT_SATURATION = (
    np.array([math.radians(-5.0), math.radians(-60.0), 0.0]),
    np.array([math.radians(20.0), math.radians(60.0), 1.0]),
)

#: Default actuator time constants (s): fast surfaces, slower engine spool.
DEFAULT_TAU = (0.1, 0.1, 0.5)


@dataclass(frozen=True)
class AircraftState:
    x: float
    y: float
    h: float
    V: float
    chi: float
    gamma: float

    def as_array(self) -> Array:
        return np.array([self.x, self.y, self.h, self.V, self.chi, self.gamma])

    @classmethod
    def from_array(cls, a) -> "AircraftState":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class AircraftControls:
    alpha: float
    mu: float
    eta: float

    def as_array(self) -> Array:
        return np.array([self.alpha, self.mu, self.eta])

    @classmethod
    def from_array(cls, a) -> "AircraftControls":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class AeroModel:
    """Point-mass aerodynamic and propulsion constants.

    The lift/drag model is the usual linear lift polar with quadratic drag:
    CL = CL0 + CL_alpha * alpha, CD = CD0 + k_induced * CL^2. Air density is
    held constant (the scenarios of interest span a 50 m altitude band).
    Defaults trim at V = 50 m/s with alpha about 4.7 deg and eta about 0.14,
    leaving roughly a 3x lift margin for transients.
    """

    mass: float = 4000.0
    S: float = 45.0
    T_max: float = 28000.0
    g: float = 9.81
    rho: float = 1.112
    CL0: float = 0.25
    CL_alpha: float = 4.6
    CD0: float = 0.025
    k_induced: float = 0.05


@dataclass(frozen=True)
class ErrorInjection:
    """Multiplicative model errors plus a lateral force disturbance.

    ``side_force_bias`` (N) stands in for the thrust components and sideslip
    effects the outer loop treats as disturbance.
    """

    thrust_scale: float = 1.0
    CL_scale: float = 1.0
    CD_scale: float = 1.0
    side_force_bias: float = 0.0


NOMINAL = ErrorInjection()


def forces(state, controls, aero: AeroModel, err: ErrorInjection = NOMINAL):
    """Lift, drag, and thrust (N) at the given flight condition."""
    q = 0.5 * aero.rho * state.V * state.V
    cl = aero.CL0 + aero.CL_alpha * controls.alpha
    cd = aero.CD0 + aero.k_induced * cl * cl
    lift = q * aero.S * cl * err.CL_scale
    drag = q * aero.S * cd * err.CD_scale
    thrust = controls.eta * aero.T_max * err.thrust_scale
    return lift, drag, thrust


def _check_gamma(gamma: float):
    if abs(abs(gamma) - 0.5 * math.pi) < 1e-6:
        raise SingularityError(
            f"flight-path angle {math.degrees(gamma):.4f} deg is at the "
            "vertical-flight singularity"
        )


def _dyn_arr(x, u, aero: AeroModel, err: ErrorInjection) -> Array:
    """Equations of motion on raw state/control arrays."""
    _, _, _, v, chi, gamma = x.tolist()
    alpha, mu, eta = u.tolist()
    _check_gamma(gamma)
    q_s = 0.5 * aero.rho * v * v * aero.S
    cl = aero.CL0 + aero.CL_alpha * alpha
    lift = q_s * cl * err.CL_scale
    drag = q_s * (aero.CD0 + aero.k_induced * cl * cl) * err.CD_scale
    thrust = eta * aero.T_max * err.thrust_scale
    f_t = -drag + thrust * math.cos(alpha)
    f_n = lift + thrust * math.sin(alpha)
    f_y = err.side_force_bias
    m = aero.mass
    sg, cg = math.sin(gamma), math.cos(gamma)
    sc, cc = math.sin(chi), math.cos(chi)
    sm, cm = math.sin(mu), math.cos(mu)
    return np.array(
        [
            v * cg * cc,
            v * cg * sc,
            v * sg,
            (f_t - m * aero.g * sg) / m,
            (f_n * sm + f_y * cm) / (m * v * cg),
            (f_n * cm - f_y * sm - m * aero.g * cg) / (m * v),
        ]
    )


def make_dynamics_pair(aero: AeroModel, err: ErrorInjection):
    """Factory for the scenario runner: one call evaluating the equations of
    motion under both the error-injected model and the nominal model, sharing
    the trigonometry (the kinematic rows are identical)."""

    def pair(x, u) -> tuple[Array, Array]:
        _, _, _, v, chi, gamma = x.tolist()
        alpha, mu, eta = u.tolist()
        _check_gamma(gamma)
        q_s = 0.5 * aero.rho * v * v * aero.S
        cl = aero.CL0 + aero.CL_alpha * alpha
        cd = aero.CD0 + aero.k_induced * cl * cl
        lift, drag = q_s * cl, q_s * cd
        thrust = eta * aero.T_max
        sa, ca = math.sin(alpha), math.cos(alpha)
        sg, cg = math.sin(gamma), math.cos(gamma)
        sc, cc = math.sin(chi), math.cos(chi)
        sm, cm = math.sin(mu), math.cos(mu)
        m = aero.mass
        g_sg = m * aero.g * sg
        g_cg = m * aero.g * cg
        mvcg = m * v * cg
        mv = m * v
        dx, dy, dh = v * cg * cc, v * cg * sc, v * sg

        ft_t = -drag * err.CD_scale + thrust * err.thrust_scale * ca
        fn_t = lift * err.CL_scale + thrust * err.thrust_scale * sa
        fy_t = err.side_force_bias
        true = np.empty(6)
        true[0] = dx
        true[1] = dy
        true[2] = dh
        true[3] = (ft_t - g_sg) / m
        true[4] = (fn_t * sm + fy_t * cm) / mvcg
        true[5] = (fn_t * cm - fy_t * sm - g_cg) / mv
        ft_n = -drag + thrust * ca
        fn_n = lift + thrust * sa
        nominal = np.empty(6)
        nominal[0] = dx
        nominal[1] = dy
        nominal[2] = dh
        nominal[3] = (ft_n - g_sg) / m
        nominal[4] = fn_n * sm / mvcg
        nominal[5] = (fn_n * cm - g_cg) / mv
        return true, nominal

    return pair


def _v_and_jacs(x, u, aero: AeroModel, err: ErrorInjection):
    """Inertial accelerations with both analytic Jacobians, sharing one
    force/trig evaluation. Returns (v, dv/du 3x3, dv/dx 3x6)."""
    _, _, _, vel, chi, gamma = x.tolist()
    alpha, mu, eta = u.tolist()
    _check_gamma(gamma)
    m = aero.mass
    sa, ca = math.sin(alpha), math.cos(alpha)
    sg, cg = math.sin(gamma), math.cos(gamma)
    sc, cc = math.sin(chi), math.cos(chi)
    sm, cm = math.sin(mu), math.cos(mu)

    q_s = 0.5 * aero.rho * vel * vel * aero.S
    cl = aero.CL0 + aero.CL_alpha * alpha
    lift = q_s * cl * err.CL_scale
    drag = q_s * (aero.CD0 + aero.k_induced * cl * cl) * err.CD_scale
    t_unit = aero.T_max * err.thrust_scale
    thrust = eta * t_unit
    f_t = -drag + thrust * ca
    f_n = lift + thrust * sa
    f_y = err.side_force_bias

    # direction coefficients of f_t, f_n, f_y in each acceleration row
    ct0, ct1, ct2 = cc * cg, sc * cg, sg
    cn0 = -(cm * sg * cc + sm * sc)
    cn1 = -(cm * sg * sc - sm * cc)
    cn2 = cm * cg
    cy0 = -(cm * sc - sm * sg * cc)
    cy1 = sm * sg * sc + cm * cc
    cy2 = -sm * cg

    v = np.empty(3)
    v[0] = v0 = (ct0 * f_t + cn0 * f_n + cy0 * f_y) / m
    v[1] = v1 = (ct1 * f_t + cn1 * f_n + cy1 * f_y) / m
    v[2] = v2 = (ct2 * f_t + cn2 * f_n + cy2 * f_y) / m - aero.g

    # control partials
    dl_da = q_s * aero.CL_alpha * err.CL_scale
    dd_da = q_s * 2.0 * aero.k_induced * cl * aero.CL_alpha * err.CD_scale
    dft_da = -dd_da - thrust * sa
    dfn_da = dl_da + thrust * ca
    dft_de = t_unit * ca
    dfn_de = t_unit * sa
    # d(cn)/dmu and d(cy)/dmu
    cn0_m = sm * sg * cc - cm * sc
    cn1_m = sm * sg * sc + cm * cc
    cn2_m = -sm * cg
    cy0_m = sm * sc + cm * sg * cc
    cy1_m = cm * sg * sc - sm * cc
    cy2_m = -cm * cg
    dv_du = np.empty((3, 3))
    dv_du[0, 0] = (ct0 * dft_da + cn0 * dfn_da) / m
    dv_du[0, 1] = (cn0_m * f_n + cy0_m * f_y) / m
    dv_du[0, 2] = (ct0 * dft_de + cn0 * dfn_de) / m
    dv_du[1, 0] = (ct1 * dft_da + cn1 * dfn_da) / m
    dv_du[1, 1] = (cn1_m * f_n + cy1_m * f_y) / m
    dv_du[1, 2] = (ct1 * dft_de + cn1 * dfn_de) / m
    dv_du[2, 0] = (ct2 * dft_da + cn2 * dfn_da) / m
    dv_du[2, 1] = (cn2_m * f_n + cy2_m * f_y) / m
    dv_du[2, 2] = (ct2 * dft_de + cn2 * dfn_de) / m

    # state partials: positions never enter; V scales the aerodynamic forces
    # quadratically; heading rotates the horizontal rows into each other;
    # the path-angle column rotates the force sum in the vertical plane.
    dft_dv = -2.0 * drag / vel
    dfn_dv = 2.0 * lift / vel
    v2_nog = v2 + aero.g
    dv_dx = np.zeros((3, 6))
    dv_dx[0, 3] = (ct0 * dft_dv + cn0 * dfn_dv) / m
    dv_dx[1, 3] = (ct1 * dft_dv + cn1 * dfn_dv) / m
    dv_dx[2, 3] = (ct2 * dft_dv + cn2 * dfn_dv) / m
    dv_dx[0, 4] = -v1
    dv_dx[1, 4] = v0
    dv_dx[0, 5] = -cc * v2_nog
    dv_dx[1, 5] = -sc * v2_nog
    dv_dx[2, 5] = (cg * f_t - sg * (cm * f_n - sm * f_y)) / m
    return v, dv_du, dv_dx


def state_derivative(state, controls, aero: AeroModel, err: ErrorInjection = NOMINAL) -> Array:
    """Point-mass equations of motion: (dx, dy, dh, dV, dchi, dgamma)/dt."""
    return _dyn_arr(state.as_array(), controls.as_array(), aero, err)


def v_aircraft(state, controls, aero: AeroModel, err: ErrorInjection = NOMINAL) -> Array:
    """Inertial accelerations (d2x, d2y, d2h)/dt2.

    Exact time derivative of the velocity kinematics through the equations
    of motion; gravity cancels from the horizontal components.
    """
    v, _, _ = _v_and_jacs(state.as_array(), controls.as_array(), aero, err)
    return v


def jac_v_controls(state, controls, aero: AeroModel, err: ErrorInjection = NOMINAL) -> Array:
    """Analytic 3x3 Jacobian of the acceleration map in (alpha, mu, eta)."""
    _, dv_du, _ = _v_and_jacs(state.as_array(), controls.as_array(), aero, err)
    return dv_du


def jac_v_states(state, controls, aero: AeroModel, err: ErrorInjection = NOMINAL) -> Array:
    """Analytic 3x6 Jacobian of the acceleration map in the state."""
    _, _, dv_dx = _v_and_jacs(state.as_array(), controls.as_array(), aero, err)
    return dv_dx


@dataclass
class ActuatorBank:
    """First-order actuator filters for the three command channels.

    ``values`` are the current actuator positions, ``tau`` the per-channel
    time constants (s). Optional symmetric rate limits (unit/s) and range
    bounds apply after the filter update.
    """

    values: Array
    tau: Array
    rate_limit: Optional[Array] = None
    lo: Optional[Array] = None
    hi: Optional[Array] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        if np.any(self.tau <= 0.0):
            raise ValueError("actuator time constants must be positive")


def actuator_step(bank: ActuatorBank, commands, dt: float) -> ActuatorBank:
    """Advance the actuator filters by dt toward the commanded values.

    Uses the exact first-order response u <- cmd + (u - cmd) e^(-dt/tau),
    then applies rate and range clamps.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    cmd = commands.as_array() if isinstance(commands, AircraftControls) else np.asarray(commands, dtype=float)
    decay = np.exp(-dt / bank.tau)
    new = cmd + (bank.values - cmd) * decay
    if bank.rate_limit is not None:
        max_delta = bank.rate_limit * dt
        new = np.clip(new, bank.values - max_delta, bank.values + max_delta)
    if bank.lo is not None:
        new = np.maximum(new, bank.lo)
    if bank.hi is not None:
        new = np.minimum(new, bank.hi)
    return ActuatorBank(values=new, tau=bank.tau, rate_limit=bank.rate_limit, lo=bank.lo, hi=bank.hi)


def trim_level_flight(
    V: float,
    h: float,
    aero: AeroModel,
    err: ErrorInjection = NOMINAL,
) -> tuple[float, float]:
    """Angle of attack and throttle for steady level flight at speed V.

    Solves thrust-balances-drag and lift-balances-weight by damped Newton on
    the specific-force residuals (target < 1e-9 N/kg). The altitude argument
    is accepted for interface symmetry; density is constant in this model.
    """
    alpha, eta = 0.03, 0.3
    lo_a, hi_a = math.radians(-5.0), math.radians(20.0)
    st = AircraftState(0.0, 0.0, h, V, 0.0, 0.0)

    def resid(a, e):
        lift, drag, thrust = forces(st, AircraftControls(a, 0.0, e), aero, err)
        m = aero.mass
        return np.array(
            [
                (-drag + thrust * math.cos(a)) / m,
                (lift + thrust * math.sin(a)) / m - aero.g,
            ]
        )

    r = resid(alpha, eta)
    converged = False
    for _ in range(60):
        if float(np.max(np.abs(r))) < 1e-9:
            converged = True
            break
        d = 1e-7
        j = np.column_stack(
            [
                (resid(alpha + d, eta) - resid(alpha - d, eta)) / (2 * d),
                (resid(alpha, eta + d) - resid(alpha, eta - d)) / (2 * d),
            ]
        )
        try:
            step_vec = np.linalg.solve(j, -r)
        except np.linalg.LinAlgError:
            raise TrimError("trim Jacobian is singular") from None
        lam = 1.0
        r_norm = float(np.linalg.norm(r))
        for _ in range(30):
            a_new = alpha + lam * step_vec[0]
            e_new = eta + lam * step_vec[1]
            r_new = resid(a_new, e_new)
            if float(np.linalg.norm(r_new)) < r_norm:
                alpha, eta, r = a_new, e_new, r_new
                break
            lam *= 0.5
        else:
            raise TrimError("trim iteration stalled")
    if not converged and float(np.max(np.abs(r))) >= 1e-9:
        raise TrimError("trim did not converge")
    if not (lo_a < alpha < hi_a) or not (0.0 < eta < 1.0):
        raise TrimError(
            f"trim solution alpha={math.degrees(alpha):.2f} deg, eta={eta:.3f} "
            "lies outside the allowed envelope"
        )
    return float(alpha), float(eta)


def make_aircraft_model(
    aero: Optional[AeroModel] = None,
    err: ErrorInjection = NOMINAL,
) -> SystemModel:
    """Aircraft as a generic plant: outputs are the position coordinates,
    each of relative degree 2."""
    aero = aero or AeroModel()

    def dynamics(x, u):
        return _dyn_arr(x, u, aero, err)

    def output(x):
        return np.array([x[0], x[1], x[2]])

    def v_map(x, u):
        return _v_and_jacs(x, u, aero, err)[0]

    def chain(x, u):
        # positions and inertial velocity components; pure kinematics
        px, py, ph, v, chi, gamma = x.tolist()
        cg = math.cos(gamma)
        out = np.empty(6)
        out[0] = px
        out[1] = v * cg * math.cos(chi)
        out[2] = py
        out[3] = v * cg * math.sin(chi)
        out[4] = ph
        out[5] = v * math.sin(gamma)
        return out

    def jac(x, u):
        _, dv_du, dv_dx = _v_and_jacs(x, u, aero, err)
        return dv_du, dv_dx

    def fused(x, u):
        return _v_and_jacs(x, u, aero, err)

    return SystemModel(
        name="aircraft-3dof",
        n=6,
        m=3,
        alphas=(2, 2, 2),
        dynamics=dynamics,
        output=output,
        v_map=v_map,
        partial_state_chain=chain,
        analytic_jacobians=jac,
        fused_v_jac=fused,
    )


register_plant("aircraft-3dof", make_aircraft_model)


def with_errors(**scales) -> ErrorInjection:
    """Convenience builder for an error injection, e.g. thrust_scale=0.9."""
    return replace(NOMINAL, **scales)
