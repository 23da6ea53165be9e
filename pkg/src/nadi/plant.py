"""Plant abstraction: dynamics, outputs, and the differentiated-output map.

A plant is described by a :class:`SystemModel` holding the state equation
``dx/dt = f(x, u)``, the output ``y = g(x)``, and the map ``v(x, u)`` that
stacks each output differentiated until the control appears (the output's
relative degree). Only square problems are supported: the number of outputs
equals the number of controls.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ShapeError
from .numerics import finite_diff_jacobian

Array = np.ndarray


@dataclass(frozen=True)
class SystemModel:
    """Immutable plant definition.

    Attributes:
        name: registry identifier.
        n: state dimension.
        m: control dimension (= number of outputs).
        alphas: per-output relative degrees, each >= 1, sum <= n.
        dynamics: (x, u) -> dx/dt.
        output: x -> y.
        v_map: (x, u) -> stacked highest output derivatives, length m.
        partial_state_chain: (x, u) -> stacked lower derivatives
            [y_i, y_i', ..., y_i^(alpha_i - 1)] for all outputs, computed
            analytically through the dynamics (length sum(alphas)).
        analytic_jacobians: optional (x, u) -> (dv/du, dv/dx); when absent
            both Jacobians fall back to central differences of ``v_map``.
        fused_v_jac: optional (x, u) -> (v, dv/du, dv/dx) sharing one
            evaluation; used by the scenario runner's hot loop.
    """

    name: str
    n: int
    m: int
    alphas: tuple[int, ...]
    dynamics: Callable[[Array, Array], Array]
    output: Callable[[Array], Array]
    v_map: Callable[[Array, Array], Array]
    partial_state_chain: Callable[[Array, Array], Array]
    analytic_jacobians: Optional[Callable[[Array, Array], tuple[Array, Array]]] = None
    fused_v_jac: Optional[Callable[[Array, Array], tuple[Array, Array, Array]]] = None

    def __post_init__(self):
        if len(self.alphas) != self.m:
            raise ConfigurationError("one relative degree per output is required")
        if any(a < 1 for a in self.alphas):
            raise ConfigurationError("relative degrees must be >= 1")
        if sum(self.alphas) > self.n:
            raise ConfigurationError("sum of relative degrees exceeds state dimension")

    @property
    def error_dim(self) -> int:
        return sum(self.alphas)


@dataclass
class PlantInstance:
    """A plant with a current state; single-threaded mutable value."""

    model: SystemModel
    state: Array
    time: float = 0.0

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        if self.state.shape != (self.model.n,):
            raise ShapeError(
                f"state must have dimension {self.model.n}, got {self.state.shape}"
            )


def _check_dims(model: SystemModel, x: Array, u: Array) -> tuple[Array, Array]:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n,):
        raise ShapeError(f"state must have dimension {model.n}, got {x.shape}")
    if u.shape != (model.m,):
        raise ShapeError(f"control must have dimension {model.m}, got {u.shape}")
    return x, u


def eval_v(model: SystemModel, x, u) -> Array:
    """Evaluate the differentiated-output map v(x, u)."""
    x, u = _check_dims(model, x, u)
    return np.asarray(model.v_map(x, u), dtype=float)


def jacobians(model: SystemModel, x, u) -> tuple[Array, Array]:
    """Return (dv/du, dv/dx), analytic when the model provides them.

    The fallback is a central-difference Jacobian of ``v_map`` in each
    argument; shapes are m-by-m and m-by-n respectively.
    """
    x, u = _check_dims(model, x, u)
    if model.analytic_jacobians is not None:
        dv_du, dv_dx = model.analytic_jacobians(x, u)
        return np.asarray(dv_du, dtype=float), np.asarray(dv_dx, dtype=float)
    dv_du = finite_diff_jacobian(lambda uu: model.v_map(x, uu), u)
    dv_dx = finite_diff_jacobian(lambda xx: model.v_map(xx, u), x)
    return dv_du, dv_dx


def error_coordinates(model: SystemModel, x, u, ref) -> Array:
    """Tracking-error stack: per output i the block
    [y_i - r_i, y_i' - r_i', ..., y_i^(a-1) - r_i^(a-1)] with a = alpha_i.

    ``ref`` must provide reference derivatives up to order alpha_i - 1 per
    output (see :class:`nadi.controller.ReferenceStack`).
    """
    x, u = _check_dims(model, x, u)
    chain = np.asarray(model.partial_state_chain(x, u), dtype=float)
    return chain - ref.lower_stack(model.alphas)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, Callable[[], SystemModel]] = {}


def register_plant(name: str, factory: Callable[[], SystemModel]) -> None:
    _REGISTRY[name] = factory


def get_plant(name: str) -> SystemModel:
    """Build the registered plant with its default parameters."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown plant '{name}'; available: {', '.join(sorted(_REGISTRY))}"
        ) from None
    return factory()


def list_plants() -> list[str]:
    return sorted(_REGISTRY)


def make_benchmark_model() -> SystemModel:
    """Scalar non-affine validation plant: dx/dt = -x + u + u^3, y = x.

    Relative degree 1 and dv/du = 1 + 3u^2 >= 1 everywhere, so the implicit
    control equation is globally solvable; used throughout the test suite.
    """

    def dynamics(x, u):
        return np.array([-x[0] + u[0] + u[0] ** 3])

    def output(x):
        return np.array([x[0]])

    def v_map(x, u):
        return np.array([-x[0] + u[0] + u[0] ** 3])

    def chain(x, u):
        return np.array([x[0]])

    def jac(x, u):
        dv_du = np.array([[1.0 + 3.0 * u[0] ** 2]])
        dv_dx = np.array([[-1.0]])
        return dv_du, dv_dx

    return SystemModel(
        name="benchmark-scalar",
        n=1,
        m=1,
        alphas=(1,),
        dynamics=dynamics,
        output=output,
        v_map=v_map,
        partial_state_chain=chain,
        analytic_jacobians=jac,
    )


register_plant("benchmark-scalar", make_benchmark_model)
