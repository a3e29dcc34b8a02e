"""Discrete-time delay-line reservoir dynamics.

A single sine nonlinearity plus a delay loop realizes N virtual nodes. When
the input hold time equals the loop period the nodes evolve as N independent
driven sine maps; holding the input for N/(N+k) of the period couples node i
to node i-k of the previous step (with a wrap-around that reaches two steps
back for the first k nodes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

DEFAULT_MAX_FEEDBACK_GAIN = 4.2


@dataclass(frozen=True)
class ReservoirParams:
    """Operating point of the reservoir.

    n_nodes: number of virtual nodes N
    desync_k: input/loop desynchronization offset k (0 = synchronized)
    feedback_gain: loop gain applied to the delayed state
    input_gain: gain applied to the masked input
    bias: constant phase offset inside the nonlinearity, radians
    """

    n_nodes: int
    desync_k: int = 1
    feedback_gain: float = 0.9
    input_gain: float = 1.0
    bias: float = 0.0
    max_feedback_gain: float = DEFAULT_MAX_FEEDBACK_GAIN

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ParameterError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if not 0 <= self.desync_k < self.n_nodes:
            raise ParameterError(
                f"desync_k must satisfy 0 <= k < n_nodes, got k={self.desync_k}"
            )
        if not 0.0 <= self.feedback_gain <= self.max_feedback_gain:
            raise ParameterError(
                f"feedback_gain {self.feedback_gain} outside "
                f"[0, {self.max_feedback_gain}]"
            )


@dataclass(frozen=True)
class MaskSpec:
    """How to draw the input mask.

    distribution: "uniform" (entries in [low, high)) or "binary" (entries
    in {-value, +value} with equal probability).
    """

    distribution: str
    n_nodes: int
    n_inputs: int = 1
    seed: int = 0
    low: float = 0.0
    high: float = 1.0
    value: float = 0.1

    def __post_init__(self):
        if self.n_nodes < 1 or self.n_inputs < 1:
            raise ParameterError("mask dimensions must be >= 1")
        if self.distribution == "uniform":
            if not self.low < self.high:
                raise ParameterError(
                    f"uniform mask needs low < high, got [{self.low}, {self.high})"
                )
        elif self.distribution == "binary":
            if not self.value > 0:
                raise ParameterError(f"binary mask needs value > 0, got {self.value}")
        else:
            raise ParameterError(f"unknown mask distribution {self.distribution!r}")


@dataclass(frozen=True)
class InputMask:
    """Per-node input coefficients, one column per input channel."""

    values: np.ndarray  # shape (n_nodes, n_inputs)
    spec: MaskSpec

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StateMatrix:
    """Reservoir states, one column per presented input step."""

    states: np.ndarray  # shape (n_nodes, n_steps)

    @property
    def n_nodes(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1]


def generate_mask(spec: MaskSpec) -> InputMask:
    """Draw a mask from its spec; identical spec gives a bit-identical mask.

    Entries are drawn node-major (row by row) from the seeded stream.
    """
    rng = np.random.default_rng(spec.seed)
    shape = (spec.n_nodes, spec.n_inputs)
    if spec.distribution == "uniform":
        values = rng.uniform(spec.low, spec.high, size=shape)
    else:
        values = np.where(rng.random(size=shape) < 0.5, -spec.value, spec.value)
    values.flags.writeable = False
    return InputMask(values=values, spec=spec)


def drive_term(mask: InputMask, u: np.ndarray, input_gain: float) -> np.ndarray:
    """Masked, scaled input: component i is input_gain * sum_j mask[i,j]*u[j]."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (mask.n_inputs,):
        raise ParameterError(
            f"input has shape {u.shape}, mask expects ({mask.n_inputs},)"
        )
    return input_gain * (mask.values @ u)


def _check_state(params: ReservoirParams, vec: np.ndarray, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (params.n_nodes,):
        raise ParameterError(
            f"{name} has shape {vec.shape}, expected ({params.n_nodes},)"
        )
    return vec


def step_synchronized(
    params: ReservoirParams, mask: InputMask, prev: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """One synchronized update: x_i = sin(a*prev_i + drive_i + bias)."""
    prev = _check_state(params, prev, "prev")
    drive = drive_term(mask, u, params.input_gain)
    return np.sin(params.feedback_gain * prev + drive + params.bias)


def step_desynchronized(
    params: ReservoirParams,
    mask: InputMask,
    state_nm1: np.ndarray,
    state_nm2: np.ndarray,
    u: np.ndarray,
) -> np.ndarray:
    """One desynchronized update with offset k.

    Node i >= k reads node i-k of the previous step; nodes i < k wrap around
    and read node N+i-k of the step before that.
    """
    k = params.desync_k
    if k == 0:
        raise ParameterError("desync_k=0: use step_synchronized")
    state_nm1 = _check_state(params, state_nm1, "state_nm1")
    state_nm2 = _check_state(params, state_nm2, "state_nm2")
    n = params.n_nodes
    fed_back = np.concatenate([state_nm2[n - k :], state_nm1[: n - k]])
    drive = drive_term(mask, u, params.input_gain)
    return np.sin(params.feedback_gain * fed_back + drive + params.bias)


def run_discrete(
    params: ReservoirParams,
    mask: InputMask,
    inputs: np.ndarray,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> StateMatrix:
    """Iterate the reservoir over an input sequence.

    inputs: array of shape (n_inputs, n_steps); a 1-D array is treated as a
    single-channel sequence. init supplies the two predecessor state vectors
    (most recent first) and defaults to zeros.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[np.newaxis, :]
    if inputs.ndim != 2 or inputs.shape[0] != mask.n_inputs:
        raise ParameterError(
            f"inputs must have shape ({mask.n_inputs}, L), got {inputs.shape}"
        )
    n_steps = inputs.shape[1]
    if n_steps < 1:
        raise ParameterError("need at least one input step")

    if init is None:
        state_nm1 = np.zeros(params.n_nodes)
        state_nm2 = np.zeros(params.n_nodes)
    else:
        state_nm1 = _check_state(params, init[0], "init[0]")
        state_nm2 = _check_state(params, init[1], "init[1]")

    # Hoist the masked-input product out of the loop; each step then only
    # needs the feedback shuffle and the sine.
    drives = params.input_gain * (mask.values @ inputs)

    n, k, alpha, bias = params.n_nodes, params.desync_k, params.feedback_gain, params.bias
    states = np.empty((n, n_steps))
    for step in range(n_steps):
        if k == 0:
            fed_back = state_nm1
        else:
            fed_back = np.concatenate([state_nm2[n - k :], state_nm1[: n - k]])
        new = np.sin(alpha * fed_back + drives[:, step] + bias)
        states[:, step] = new
        state_nm2 = state_nm1
        state_nm1 = new
    states.flags.writeable = False
    return StateMatrix(states=states)
