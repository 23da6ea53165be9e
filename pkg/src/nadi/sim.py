"""Closed-loop scenario runner, validation oracle, and trace output.

A scenario couples a plant, a reference trajectory, and a controller into one
augmented ODE (plant state, commanded controls, integral accumulators, and
actuator states) integrated by a single fixed-step RK4 pass. Saturation and
anti-windup clamps apply between steps, never inside the integrator stages.

The controller always works with the nominal plant model; the integrated
("true") plant may carry injected modeling errors and actuator lag. That
mismatch is what the integral term has to absorb.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import aircraft as ac
from .controller import (
    GainSet,
    ReferenceStack,
    _det_and_regular,
    _z_pair,
    control_derivative,
    gain_bound_at,
    inversion_matrix,
    make_update_law,
    prescribed_z,
    residual,
    zdot,
)
from .errors import (
    ConfigurationError,
    DivergenceError,
    EvaluationError,
    OracleFailureError,
    RankError,
)
from .numerics import check_finite, finite_diff_jacobian, pseudo_inverse, rk4_step
from .plant import SystemModel, error_coordinates, eval_v, get_plant, jacobians

Array = np.ndarray

AIRCRAFT = "aircraft-3dof"

AIRCRAFT_COLUMNS = (
    "t", "x", "y", "h", "V", "chi_deg", "gamma_deg",
    "alpha_cmd_deg", "mu_cmd_deg", "eta_cmd",
    "alpha_act_deg", "mu_act_deg", "eta_act",
    "xr", "yr", "hr", "ex", "ey", "eh",
    "h1", "h2", "h3", "Vs", "det_dvdu", "eq40_bound", "pinv_active",
)


# ---------------------------------------------------------------------------
# Reference trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutputReference:
    """Reference signal for one output.

    Kinds: ``constant`` (value), ``linear-ramp`` (value + rate * t), and
    ``sinusoid`` (value + amplitude * sin(omega * t + phase)).
    """

    kind: str
    value: float = 0.0
    rate: float = 0.0
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def derivatives(self, t: float, order: int) -> Array:
        out = np.zeros(order + 1)
        if self.kind == "constant":
            out[0] = self.value
        elif self.kind == "linear-ramp":
            out[0] = self.value + self.rate * t
            if order >= 1:
                out[1] = self.rate
        elif self.kind == "sinusoid":
            arg = self.omega * t + self.phase
            out[0] = self.value + self.amplitude * math.sin(arg)
            scale = self.amplitude
            for k in range(1, order + 1):
                scale *= self.omega
                out[k] = scale * math.sin(arg + k * 0.5 * math.pi)
        else:
            raise ConfigurationError(f"unknown reference kind '{self.kind}'")
        return out


@dataclass(frozen=True)
class ReferenceSpec:
    """Per-output reference signals bound to the derivative orders needed."""

    outputs: tuple[OutputReference, ...]
    orders: tuple[int, ...]

    def __post_init__(self):
        if len(self.outputs) != len(self.orders):
            raise ConfigurationError("one derivative order per reference output")


def reference_signal(spec: ReferenceSpec, t: float) -> ReferenceStack:
    """Sample the reference trajectory and its derivatives at time t."""
    return ReferenceStack(
        tuple(o.derivatives(t, k) for o, k in zip(spec.outputs, spec.orders))
    )


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    """Everything needed for a deterministic closed-loop run.

    State, controls, and saturation bounds are in internal units (radians);
    the JSON loader converts angle entries from degrees. ``seed`` is reserved
    for randomized test harnesses and does not affect the run.
    """

    plant: str
    initial_state: Array
    initial_controls: Array
    reference: tuple[OutputReference, ...]
    gains: GainSet
    mode: str = "full"
    duration: float = 10.0
    dt: float = 1e-3
    errors: ac.ErrorInjection = ac.NOMINAL
    aero: ac.AeroModel = field(default_factory=ac.AeroModel)
    actuators_enabled: bool = False
    actuator_tau: Optional[Array] = None
    saturation_enabled: bool = False
    saturation: Optional[tuple[Array, Array]] = None
    integral_limit: float = 100.0
    u_bound: float = 1e6
    decimation: int = 10
    vs_settle_threshold: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        self.initial_state = check_finite(self.initial_state, "initial state")
        self.initial_controls = check_finite(self.initial_controls, "initial controls")
        if not 0.0 < self.dt <= 0.02:
            raise ConfigurationError("dt must lie in (0, 0.02] s")
        if self.duration <= 0.0:
            raise ConfigurationError("duration must be positive")
        if self.decimation < 1:
            raise ConfigurationError("decimation must be >= 1")
        if self.actuators_enabled:
            if self.actuator_tau is None:
                if self.plant == AIRCRAFT:
                    self.actuator_tau = np.array(ac.DEFAULT_TAU)
                else:
                    raise ConfigurationError("actuator time constants required")
            self.actuator_tau = check_finite(self.actuator_tau, "actuator tau")
            if np.any(self.actuator_tau <= 0.0):
                raise ConfigurationError("actuator time constants must be positive")
        if self.saturation_enabled and self.saturation is None:
            if self.plant == AIRCRAFT:
                self.saturation = (
                    ac.DEFAULT_SATURATION[0].copy(),
                    ac.DEFAULT_SATURATION[1].copy(),
                )
            else:
                raise ConfigurationError("saturation bounds required")


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build a scenario from parsed JSON, converting angles from degrees."""
    try:
        plant = raw["plant"]
        state = np.asarray(raw["initial_state"], dtype=float)
        controls = np.asarray(raw["initial_controls"], dtype=float)
        ref_raw = raw["reference"]
        gains_raw = raw["gains"]
    except KeyError as missing:
        raise ConfigurationError(f"missing config field {missing}") from None

    if plant == AIRCRAFT:
        for i in ac.STATE_ANGLE_IDX:
            state[i] = math.radians(state[i])
        for i in ac.CONTROL_ANGLE_IDX:
            controls[i] = math.radians(controls[i])

    outputs = []
    for entry in ref_raw:
        entry = dict(entry)
        kind = entry.pop("kind", None)
        if kind is None:
            raise ConfigurationError("reference entries need a 'kind'")
        try:
            outputs.append(OutputReference(kind=kind, **entry))
        except TypeError as exc:
            raise ConfigurationError(f"bad reference entry: {exc}") from None

    k_s = gains_raw.get("k_s", 1.0)
    k_s = np.asarray(k_s, dtype=float)
    k_integral = gains_raw.get("k_integral")
    if "poles" in gains_raw:
        gains = GainSet.from_poles(gains_raw["poles"], k_s, k_integral)
    elif "k_blocks" in gains_raw:
        m = len(gains_raw["k_blocks"])
        if k_s.ndim == 0:
            k_s = float(k_s) * np.eye(m)
        gains = GainSet(
            tuple(np.asarray(k, dtype=float) for k in gains_raw["k_blocks"]),
            k_s,
            np.zeros(m) if k_integral is None else np.asarray(k_integral, dtype=float),
        )
    else:
        raise ConfigurationError("gains need either 'poles' or 'k_blocks'")

    err_raw = raw.get("errors", {})
    errors = ac.ErrorInjection(
        thrust_scale=err_raw.get("thrust_scale", 1.0),
        CL_scale=err_raw.get("CL_scale", 1.0),
        CD_scale=err_raw.get("CD_scale", 1.0),
        side_force_bias=err_raw.get("side_force_bias", 0.0),
    )
    aero_raw = raw.get("aero", {})
    try:
        aero = ac.AeroModel(**aero_raw)
    except TypeError as exc:
        raise ConfigurationError(f"bad aero field: {exc}") from None

    act_raw = raw.get("actuators", {})
    act_enabled = bool(act_raw.get("enabled", False))
    tau = act_raw.get("tau")
    tau = None if tau is None else np.asarray(tau, dtype=float)

    sat_raw = raw.get("saturation", {})
    sat_enabled = bool(sat_raw.get("enabled", False))
    saturation = None
    if sat_enabled and ("lo" in sat_raw or "alpha_deg" in sat_raw):
        if plant == AIRCRAFT:
            a = sat_raw.get("alpha_deg", (-5.0, 20.0))
            mu = sat_raw.get("mu_deg", (-60.0, 60.0))
            eta = sat_raw.get("eta", (0.0, 1.0))
            lo = np.array([math.radians(a[0]), math.radians(mu[0]), eta[0]])
            hi = np.array([math.radians(a[1]), math.radians(mu[1]), eta[1]])
        else:
            lo = np.asarray(sat_raw["lo"], dtype=float)
            hi = np.asarray(sat_raw["hi"], dtype=float)
        saturation = (lo, hi)

    return ScenarioConfig(
        plant=plant,
        initial_state=state,
        initial_controls=controls,
        reference=tuple(outputs),
        gains=gains,
        mode=raw.get("mode", "full"),
        duration=float(raw.get("duration", 10.0)),
        dt=float(raw.get("dt", 1e-3)),
        errors=errors,
        aero=aero,
        actuators_enabled=act_enabled,
        actuator_tau=tau,
        saturation_enabled=sat_enabled,
        saturation=saturation,
        integral_limit=float(raw.get("integral_limit", 100.0)),
        u_bound=float(raw.get("u_bound", 1e6)),
        decimation=int(raw.get("decimation", 10)),
        seed=int(raw.get("seed", 0)),
    )


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON in {path}: {exc}") from None
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# Trace records and summaries
# ---------------------------------------------------------------------------

@dataclass
class TraceRecord:
    """One decimated sample of the closed loop.

    ``z`` and ``integral_err`` are kept for in-memory analysis (the Newton
    validation oracle needs the prescribed value) but are not CSV columns.
    """

    t: float
    state: Array
    u_cmd: Array
    u_act: Array
    y: Array
    y_ref: Array
    err: Array
    h: Array
    vs: float
    det_dvdu: float
    eq40_bound: float
    pinv_active: bool
    z: Array
    integral_err: Array
    plant: str = ""


@dataclass
class RunSummary:
    """Deterministic digest of a trace."""

    final_errors: Array
    vs_settle_time: float
    max_abs_error_after_settle: float
    steady_state_means: Array
    diverged: bool
    divergence_time: Optional[float] = None


def _build_models(config: ScenarioConfig) -> tuple[SystemModel, SystemModel]:
    if config.plant == AIRCRAFT:
        ctrl_model = ac.make_aircraft_model(config.aero, ac.NOMINAL)
        if config.errors == ac.NOMINAL:
            true_model = ctrl_model
        else:
            true_model = ac.make_aircraft_model(config.aero, config.errors)
        return true_model, ctrl_model
    model = get_plant(config.plant)
    return model, model


def _error_stack_derivative(e_stack, v_ctrl, ref, alphas) -> Array:
    """Analytic time derivative of the tracking-error stack.

    Within each block the derivative of one entry is the next entry; the last
    entry differentiates to the (model-predicted) highest output derivative
    minus the reference derivative of the same order.
    """
    out = np.empty_like(e_stack)
    off = 0
    for i, a in enumerate(alphas):
        out[off : off + a - 1] = e_stack[off + 1 : off + a]
        out[off + a - 1] = v_ctrl[i] - ref.order(i, a)
        off += a
    return out


def _make_reference_sampler(spec: ReferenceSpec, alphas):
    """Closure returning (lower_stack, feedforward, feedforward_dot) at t.

    Static entries (constants, higher ramp derivatives) are evaluated once;
    only time-dependent slots are refreshed per call. The returned arrays are
    reused between calls and must be treated as read-only.
    """
    starts = np.concatenate(([0], np.cumsum(alphas)[:-1])).astype(int)
    base = [o.derivatives(0.0, k) for o, k in zip(spec.outputs, spec.orders)]
    lower = np.concatenate([d[:a] for d, a in zip(base, alphas)])
    ff = np.array([d[a] for d, a in zip(base, alphas)])
    ffd = np.array([float(d[a + 1]) if d.size > a + 1 else 0.0 for d, a in zip(base, alphas)])
    for i, (d, a) in enumerate(zip(base, alphas)):
        if d.size <= a + 1:
            raise ConfigurationError(
                f"reference for output {i} must provide derivatives through "
                f"order {a + 1}"
            )
    ramps = [
        (int(starts[i]), o)
        for i, o in enumerate(spec.outputs)
        if o.kind == "linear-ramp"
    ]
    sins = [i for i, o in enumerate(spec.outputs) if o.kind == "sinusoid"]

    def sample(t: float):
        for s0, o in ramps:
            lower[s0] = o.value + o.rate * t
        for i in sins:
            a = alphas[i]
            d = spec.outputs[i].derivatives(t, spec.orders[i])
            lower[starts[i] : starts[i] + a] = d[:a]
            ff[i] = d[a]
            ffd[i] = d[a + 1]
        return lower, ff, ffd

    return sample


def run_scenario(config: ScenarioConfig) -> tuple[list[TraceRecord], RunSummary]:
    """Integrate the closed loop and return (trace, summary).

    Deterministic: identical configs produce identical traces. Divergence
    (non-finite state or a control norm beyond ``u_bound``) terminates the
    run early with a partial trace and a flagged summary.
    """
    true_model, ctrl_model = _build_models(config)
    gains = config.gains
    if gains.alphas != tuple(ctrl_model.alphas):
        raise ConfigurationError(
            f"gain blocks {gains.alphas} do not match plant relative degrees "
            f"{tuple(ctrl_model.alphas)}"
        )
    if len(config.reference) != ctrl_model.m:
        raise ConfigurationError("one reference output per plant output required")
    if config.initial_state.shape != (ctrl_model.n,):
        raise ConfigurationError(f"initial state must have dimension {ctrl_model.n}")
    if config.initial_controls.shape != (ctrl_model.m,):
        raise ConfigurationError(f"initial controls must have dimension {ctrl_model.m}")

    n, m = ctrl_model.n, ctrl_model.m
    alphas = ctrl_model.alphas
    act_on = config.actuators_enabled
    spec = ReferenceSpec(config.reference, tuple(a + 1 for a in alphas))
    share_xdot = true_model is ctrl_model

    iu, ii, ia = n, n + m, n + 2 * m
    parts = [config.initial_state, config.initial_controls, np.zeros(m)]
    if act_on:
        parts.append(config.initial_controls)
    s = np.concatenate(parts)
    tau = config.actuator_tau
    mode = config.mode
    head_idx = np.concatenate(([0], np.cumsum(alphas)[:-1])).astype(int)
    # index maps turning the error stack into its derivative: shifted entries
    # plus the per-block tail slot fed by v - feedforward
    shift_dst = np.concatenate(
        [np.arange(h, h + a - 1) for h, a in zip(head_idx, alphas)]
    ).astype(int)
    shift_src = shift_dst + 1
    tail_idx = (head_idx + np.asarray(alphas) - 1).astype(int)
    fused = ctrl_model.fused_v_jac
    chain_fn = ctrl_model.partial_state_chain
    sampler = _make_reference_sampler(spec, alphas)
    dyn_pair = (
        ac.make_dynamics_pair(config.aero, config.errors)
        if (config.plant == AIRCRAFT and not share_xdot)
        else None
    )
    e_dot = np.empty(sum(alphas))
    has_integral = bool(np.any(gains.k_integral > 0.0))
    integ_limit = config.integral_limit
    update_law = make_update_law(gains, mode)

    def aug_deriv(t, sv):
        x = sv[:n]
        u_cmd = sv[iu:ii]
        integ = sv[ii:ia]
        u_act = sv[ia:] if act_on else u_cmd
        lower, ff, ffd = sampler(t)
        if fused is not None:
            v_ctrl, dv_du, dv_dx = fused(x, u_cmd)
        else:
            v_ctrl = ctrl_model.v_map(x, u_cmd)
            dv_du, dv_dx = jacobians(ctrl_model, x, u_cmd)
        e = chain_fn(x, u_cmd) - lower
        heads_err = e[head_idx]
        e_dot[shift_dst] = e[shift_src]
        e_dot[tail_idx] = v_ctrl - ff
        # anti-windup: an accumulator pinned at its clamp stops integrating,
        # and the prescribed-dynamics derivative must see that rate as zero
        # or the inversion term would chase a phantom reference motion
        if has_integral:
            i_rate = heads_err.copy()
            for j in range(m):
                ij = integ[j]
                rj = i_rate[j]
                if (ij >= integ_limit and rj > 0.0) or (
                    ij <= -integ_limit and rj < 0.0
                ):
                    i_rate[j] = 0.0
        else:
            i_rate = heads_err
        z, zd = _z_pair(e, e_dot, ff, ffd, i_rate, integ, gains)
        if dyn_pair is not None:
            xdot_true, xdot_ctrl = dyn_pair(x, u_act)
        else:
            xdot_true = true_model.dynamics(x, u_act)
            xdot_ctrl = xdot_true if share_xdot else ctrl_model.dynamics(x, u_act)
        udot = update_law(v_ctrl, dv_du, dv_dx, z, zd, xdot_ctrl)
        out = np.empty_like(sv)
        out[:n] = xdot_true
        out[iu:ii] = udot
        out[ii:ia] = i_rate
        if act_on:
            out[ia:] = (u_cmd - u_act) / tau
        return out

    def make_record(t, sv):
        x = sv[:n].copy()
        u_cmd = sv[iu:ii].copy()
        integ = sv[ii:ia].copy()
        u_act = sv[ia:].copy() if act_on else u_cmd
        ref = reference_signal(spec, t)
        if fused is not None:
            v_ctrl, dv_du, dv_dx = fused(x, u_cmd)
        else:
            v_ctrl = ctrl_model.v_map(x, u_cmd)
            dv_du, dv_dx = jacobians(ctrl_model, x, u_cmd)
        e = error_coordinates(ctrl_model, x, u_cmd, ref)
        z = prescribed_z(e, ref, integ, gains)
        h = v_ctrl - z
        vs = 0.5 * float(h @ h)
        det, regular = _det_and_regular(dv_du)
        try:
            bound = gain_bound_at(ctrl_model, x, u_cmd, gains, jac=(dv_du, dv_dx))
        except (RankError, EvaluationError):
            bound = float("nan")
        y = np.asarray(ctrl_model.output(x), dtype=float)
        y_ref = ref.heads()
        return TraceRecord(
            t=t,
            state=x,
            u_cmd=u_cmd,
            u_act=u_act,
            y=y,
            y_ref=y_ref,
            err=y - y_ref,
            h=h,
            vs=vs,
            det_dvdu=det,
            eq40_bound=bound,
            pinv_active=not regular,
            z=z,
            integral_err=integ,
            plant=config.plant,
        )

    steps = int(round(config.duration / config.dt))
    records: list[TraceRecord] = []
    diverged = False
    div_time: Optional[float] = None
    sat = config.saturation if config.saturation_enabled else None

    for i in range(steps + 1):
        t = i * config.dt
        if i % config.decimation == 0 or i == steps:
            records.append(make_record(t, s))
        if i == steps:
            break
        try:
            s = rk4_step(aug_deriv, s, t, config.dt)
        except DivergenceError as exc:
            diverged = True
            div_time = exc.time if exc.time is not None else t
            break
        np.clip(
            s[ii:ia], -config.integral_limit, config.integral_limit, out=s[ii:ia]
        )
        if sat is not None:
            np.clip(s[iu:ii], sat[0], sat[1], out=s[iu:ii])
            if act_on:
                np.clip(s[ia:], sat[0], sat[1], out=s[ia:])
        u_slice = s[iu:ii]
        if float(u_slice @ u_slice) > config.u_bound * config.u_bound:
            diverged = True
            div_time = t + config.dt
            break

    summary = _summarize(records, config, diverged, div_time)
    return records, summary


def _summarize(records, config, diverged, div_time) -> RunSummary:
    if not records:
        return RunSummary(
            final_errors=np.zeros(0),
            vs_settle_time=float("nan"),
            max_abs_error_after_settle=float("nan"),
            steady_state_means=np.zeros(0),
            diverged=diverged,
            divergence_time=div_time,
        )
    ts = np.array([r.t for r in records])
    errs = np.array([r.err for r in records])
    vs = np.array([r.vs for r in records])
    settled = np.nonzero(vs < config.vs_settle_threshold)[0]
    settle_time = float(ts[settled[0]]) if settled.size else float("nan")
    if settled.size:
        after = np.abs(errs[ts >= settle_time])
        max_after = float(after.max()) if after.size else float("nan")
    else:
        max_after = float("nan")
    window = ts >= ts[-1] - 5.0
    steady = np.mean(np.abs(errs[window]), axis=0)
    return RunSummary(
        final_errors=errs[-1],
        vs_settle_time=settle_time,
        max_abs_error_after_settle=max_after,
        steady_state_means=steady,
        diverged=diverged,
        divergence_time=div_time,
    )


# ---------------------------------------------------------------------------
# Validation oracle
# ---------------------------------------------------------------------------

def newton_oracle(model: SystemModel, x, z, u_guess, tol=1e-10, max_iter=50) -> Array:
    """Solve v(x, u) = z by damped Newton iteration.

    The conventional per-step root-finder the integrated update law replaces;
    used to validate converged controls. The Jacobian is taken by central
    differences so the oracle stays independent of the analytic path.
    """
    x = check_finite(x, "state")
    z = check_finite(z, "prescribed value")
    u = check_finite(u_guess, "control guess").copy()
    h = eval_v(model, x, u) - z
    h_norm = float(np.linalg.norm(h))
    for _ in range(max_iter):
        if h_norm < tol:
            return u
        jac = finite_diff_jacobian(lambda uu: model.v_map(x, uu), u)
        try:
            d = np.linalg.solve(jac, -h)
        except np.linalg.LinAlgError:
            d = pseudo_inverse(jac) @ (-h)
        lam = 1.0
        for _ in range(30):
            u_try = u + lam * d
            h_try = eval_v(model, x, u_try) - z
            h_try_norm = float(np.linalg.norm(h_try))
            if h_try_norm < h_norm:
                u, h, h_norm = u_try, h_try, h_try_norm
                break
            lam *= 0.5
        else:
            raise OracleFailureError(
                f"line search stalled at |h| = {h_norm:.3e}"
            )
    if h_norm < tol:
        return u
    raise OracleFailureError(f"no convergence in {max_iter} iterations (|h| = {h_norm:.3e})")


def oracle_deviation(records: Sequence[TraceRecord], config: ScenarioConfig) -> float:
    """Max distance between traced controls and the Newton-oracle roots,
    evaluated at every record after the solve residual first settles."""
    _, ctrl_model = _build_models(config)
    worst = 0.0
    settled = False
    for rec in records:
        if not settled and rec.vs < config.vs_settle_threshold:
            settled = True
        if not settled:
            continue
        u_star = newton_oracle(ctrl_model, rec.state, rec.z, rec.u_cmd)
        worst = max(worst, float(np.linalg.norm(rec.u_cmd - u_star)))
    if not settled:
        raise OracleFailureError("solve residual never settled below threshold")
    return worst


# ---------------------------------------------------------------------------
# CSV trace output
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.17e}"


def _aircraft_row(r: TraceRecord) -> list[str]:
    deg = math.degrees
    vals = [
        r.t,
        r.state[0], r.state[1], r.state[2], r.state[3],
        deg(r.state[4]), deg(r.state[5]),
        deg(r.u_cmd[0]), deg(r.u_cmd[1]), r.u_cmd[2],
        deg(r.u_act[0]), deg(r.u_act[1]), r.u_act[2],
        r.y_ref[0], r.y_ref[1], r.y_ref[2],
        r.err[0], r.err[1], r.err[2],
        r.h[0], r.h[1], r.h[2],
        r.vs, r.det_dvdu, r.eq40_bound,
    ]
    return [_fmt(v) for v in vals] + [str(int(r.pinv_active))]


def write_trace(trace: Sequence[TraceRecord], path, plant: Optional[str] = None) -> None:
    """Write the trace as CSV.

    Aircraft runs use the full column set (angles in degrees); other plants
    get the reduced set: t, states, controls, output errors, Vs.
    """
    name = trace[0].plant if trace else (plant or AIRCRAFT)
    lines = []
    if name == AIRCRAFT:
        lines.append(",".join(AIRCRAFT_COLUMNS))
        for r in trace:
            lines.append(",".join(_aircraft_row(r)))
    else:
        n = trace[0].state.size if trace else 0
        m = trace[0].u_cmd.size if trace else 0
        header = (
            ["t"]
            + [f"x{i}" for i in range(n)]
            + [f"u{j}" for j in range(m)]
            + [f"e{j}" for j in range(m)]
            + ["Vs"]
        )
        lines.append(",".join(header))
        for r in trace:
            vals = (
                [r.t]
                + list(r.state)
                + list(r.u_cmd)
                + list(r.err)
                + [r.vs]
            )
            lines.append(",".join(_fmt(v) for v in vals))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace(path) -> dict[str, Array]:
    """Parse a trace CSV back into named columns."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in row] for row in rows]) if rows else np.zeros(
        (0, len(header))
    )
    return {name: data[:, j] for j, name in enumerate(header)}
