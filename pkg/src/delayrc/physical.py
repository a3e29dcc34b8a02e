"""Continuous-time simulation of the optoelectronic feedback loop.

The loop is sampled at a fixed rate. Each virtual node occupies a slot of
theta_samples samples and the delay line holds (n_nodes + desync_k) slots, so
the loop delay is an exact integer number of samples. The per-sample
recursion is

    out[t] = sin(a * F(out[t - delay] + noise[t]) + b * G(drive[t]) + bias)

where F is a first-order bandpass (photodiode lowpass cascaded with the
amplifier highpass) and G the highpass alone. Because the feedback input of
one delay period is entirely the output of the previous period, the
recursion is evaluated period by period with vectorized filtering, which is
exactly equivalent to the sample-by-sample form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError
from .reservoir import InputMask, StateMatrix

NYQUIST_CLAMP = 0.49  # fraction of the sample rate a cutoff is clamped to


@dataclass(frozen=True)
class PhysicalParams:
    """Loop operating point plus sampling and filter parameters."""

    n_nodes: int = 50
    desync_k: int = 1
    feedback_gain: float = 0.9
    input_gain: float = 1.0
    bias: float = 0.0
    sample_rate: float = 2.0e8
    theta_samples: int = 34
    lowpass_cutoff_hz: float = 1.25e8
    highpass_cutoff_hz: float = 5.0e4
    noise_std: float = 0.035
    filters_enabled: bool = True
    noise_seed: int = 0
    max_feedback_gain: float = 4.2

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ParameterError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if not 0 <= self.desync_k < self.n_nodes:
            raise ParameterError(f"desync_k must satisfy 0 <= k < n_nodes")
        if not 0.0 <= self.feedback_gain <= self.max_feedback_gain:
            raise ParameterError(
                f"feedback_gain {self.feedback_gain} outside "
                f"[0, {self.max_feedback_gain}]"
            )
        if self.theta_samples < 2:
            raise ParameterError("theta_samples must be >= 2")
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")
        if not 0 < self.highpass_cutoff_hz < self.lowpass_cutoff_hz:
            raise ParameterError(
                "need 0 < highpass_cutoff_hz < lowpass_cutoff_hz"
            )
        if self.noise_std < 0:
            raise ParameterError("noise_std must be >= 0")

    @property
    def delay_samples(self) -> int:
        """Loop delay in samples: (n_nodes + desync_k) node slots."""
        return (self.n_nodes + self.desync_k) * self.theta_samples

    def oversampled(self, factor: int) -> "PhysicalParams":
        """Same loop simulated at `factor` times the sample rate.

        Scales sample_rate and theta_samples together so the delay stays an
        integer number of samples; useful when the lowpass cutoff must stay
        below Nyquist instead of being clamped.
        """
        if factor < 1 or factor != int(factor):
            raise ParameterError("oversample factor must be a positive integer")
        return replace(
            self,
            sample_rate=self.sample_rate * factor,
            theta_samples=self.theta_samples * factor,
        )


@dataclass(frozen=True)
class AnalogSignal:
    """Uniformly sampled real-valued signal."""

    samples: np.ndarray
    rate: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("analog signal contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)


class FilterState:
    """First-order IIR section with carried state.

    Processing a stream chunk by chunk through `process` is identical to
    filtering it in one call; a fresh state on a zero stream yields zeros.
    """

    def __init__(self, b, a):
        self.b = np.asarray(b, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.zi = np.zeros(1)

    def process(self, chunk: np.ndarray) -> np.ndarray:
        out, self.zi = lfilter(self.b, self.a, chunk, zi=self.zi)
        return out


def _clamped_cutoff(cutoff_hz: float, rate: float) -> float:
    if cutoff_hz <= 0:
        raise ParameterError(f"cutoff must be positive, got {cutoff_hz}")
    nyquist = rate / 2.0
    if cutoff_hz >= nyquist:
        clamped = NYQUIST_CLAMP * rate
        warnings.warn(
            f"filter cutoff {cutoff_hz:g} Hz is at or above the Nyquist "
            f"frequency {nyquist:g} Hz; clamping to {clamped:g} Hz",
            stacklevel=3,
        )
        return clamped
    return cutoff_hz


def lowpass_coefficients(cutoff_hz: float, rate: float):
    """Bilinear-transform one-pole lowpass (b, a), prewarped, unity DC gain."""
    cutoff_hz = _clamped_cutoff(cutoff_hz, rate)
    omega_t = 2.0 * np.tan(np.pi * cutoff_hz / rate)
    b = np.array([omega_t, omega_t]) / (2.0 + omega_t)
    a = np.array([1.0, -(2.0 - omega_t) / (2.0 + omega_t)])
    return b, a


def highpass_coefficients(cutoff_hz: float, rate: float):
    """Bilinear-transform one-pole highpass (b, a), prewarped, zero DC gain."""
    cutoff_hz = _clamped_cutoff(cutoff_hz, rate)
    omega_t = 2.0 * np.tan(np.pi * cutoff_hz / rate)
    b = np.array([2.0, -2.0]) / (2.0 + omega_t)
    a = np.array([1.0, -(2.0 - omega_t) / (2.0 + omega_t)])
    return b, a


def one_pole_lowpass(signal: AnalogSignal, cutoff_hz: float) -> AnalogSignal:
    if len(signal) == 0:
        raise ParameterError("cannot filter an empty signal")
    b, a = lowpass_coefficients(cutoff_hz, signal.rate)
    return AnalogSignal(lfilter(b, a, signal.samples), signal.rate)


def one_pole_highpass(signal: AnalogSignal, cutoff_hz: float) -> AnalogSignal:
    if len(signal) == 0:
        raise ParameterError("cannot filter an empty signal")
    b, a = highpass_coefficients(cutoff_hz, signal.rate)
    return AnalogSignal(lfilter(b, a, signal.samples), signal.rate)


def sample_and_hold(
    inputs: np.ndarray,
    mask: InputMask,
    theta_samples: int,
    n_nodes: int,
    rate: float = 2.0e8,
) -> AnalogSignal:
    """Masked input stream held constant over each node slot.

    The slot for (step n, node i) carries sum_j mask[i, j] * u_j(n) for
    theta_samples samples; the result has length L * n_nodes * theta_samples.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[np.newaxis, :]
    if inputs.shape[0] != mask.n_inputs:
        raise ParameterError(
            f"inputs must have shape ({mask.n_inputs}, L), got {inputs.shape}"
        )
    if mask.n_nodes != n_nodes:
        raise ParameterError(
            f"mask has {mask.n_nodes} nodes, expected {n_nodes}"
        )
    if theta_samples < 1:
        raise ParameterError("theta_samples must be >= 1")
    held = mask.values @ inputs  # (n_nodes, L)
    samples = np.repeat(held.T.ravel(), theta_samples)
    return AnalogSignal(samples, rate)


def simulate_loop(
    params: PhysicalParams,
    drive: AnalogSignal,
    init_history: np.ndarray | None = None,
) -> AnalogSignal:
    """Run the delayed-feedback loop over a drive signal.

    init_history supplies the delay-line content before t=0 (delay_samples
    values, oldest first); it defaults to zeros.
    """
    total = len(drive)
    theta = params.theta_samples
    if total == 0 or total % theta != 0:
        raise ParameterError(
            f"drive length {total} is not a positive multiple of "
            f"theta_samples={theta}"
        )
    delay = params.delay_samples

    if init_history is None:
        history = np.zeros(delay)
    else:
        history = np.asarray(init_history, dtype=float)
        if history.shape != (delay,):
            raise ParameterError(
                f"init_history must have shape ({delay},), got {history.shape}"
            )

    if params.noise_std > 0:
        rng = np.random.default_rng(params.noise_seed)
        noise = rng.normal(0.0, params.noise_std, size=total)
    else:
        noise = np.zeros(total)

    if params.filters_enabled:
        fb_lp = FilterState(*lowpass_coefficients(params.lowpass_cutoff_hz, drive.rate))
        fb_hp = FilterState(*highpass_coefficients(params.highpass_cutoff_hz, drive.rate))
        dr_hp = FilterState(*highpass_coefficients(params.highpass_cutoff_hz, drive.rate))
    else:
        fb_lp = fb_hp = dr_hp = None

    alpha = params.feedback_gain
    beta = params.input_gain
    bias = params.bias
    drive_samples = drive.samples
    out = np.empty(total)

    for start in range(0, total, delay):
        stop = min(start + delay, total)
        if start == 0:
            delayed = history[: stop - start]
        else:
            delayed = out[start - delay : stop - delay]
        fb_in = delayed + noise[start:stop]
        if params.filters_enabled:
            fb = fb_hp.process(fb_lp.process(fb_in))
            dr = dr_hp.process(drive_samples[start:stop])
        else:
            fb = fb_in
            dr = drive_samples[start:stop]
        out[start:stop] = np.sin(alpha * fb + beta * dr + bias)

    return AnalogSignal(out, drive.rate)


def extract_states(
    signal: AnalogSignal, theta_samples: int, n_nodes: int
) -> StateMatrix:
    """Average the middle half of each node slot into a state value.

    The first and last quarter of every slot are discarded to skip the
    transitions between held values.
    """
    if theta_samples < 2:
        raise ParameterError("theta_samples must be >= 2")
    total = len(signal)
    slot = n_nodes * theta_samples
    if total == 0 or total % slot != 0:
        raise ParameterError(
            f"signal length {total} is not a positive multiple of "
            f"n_nodes*theta_samples={slot}"
        )
    n_steps = total // slot
    lo = theta_samples // 4
    hi = theta_samples - lo
    windows = signal.samples.reshape(n_steps, n_nodes, theta_samples)
    states = windows[:, :, lo:hi].mean(axis=2).T
    states.flags.writeable = False
    return StateMatrix(states=states)


def _slot_means(samples: np.ndarray, theta_samples: int) -> np.ndarray:
    lo = theta_samples // 4
    hi = theta_samples - lo
    return samples.reshape(-1, theta_samples)[:, lo:hi].mean(axis=1)


def bifurcation_scan(
    params: PhysicalParams,
    feedback_gains,
    steps_per_alpha: int = 2000,
    transient_discard: int | None = None,
    n_bins: int = 200,
    value_range: tuple[float, float] = (-1.05, 1.05),
    init_scale: float = 1e-2,
):
    """Histogram the undriven loop's long-run states over a gain grid.

    steps_per_alpha and transient_discard count node slots; the transient
    defaults to 200 loop periods. The delay line starts from small seeded
    random values: zero is a fixed point of the undriven loop at zero bias,
    so a noiseless scan started exactly there would never leave it.

    Returns a list of (feedback_gain, bin_edges, counts) triples.
    """
    if params.input_gain != 0.0:
        raise ParameterError("bifurcation scan requires input_gain=0 (undriven)")
    if steps_per_alpha < 1:
        raise ParameterError("steps_per_alpha must be >= 1")
    theta = params.theta_samples
    if transient_discard is None:
        transient_discard = 200 * (params.n_nodes + params.desync_k)
    total_slots = transient_discard + steps_per_alpha
    zero_drive = AnalogSignal(np.zeros(total_slots * theta), params.sample_rate)
    edges = np.linspace(value_range[0], value_range[1], n_bins + 1)

    rng = np.random.default_rng(params.noise_seed)
    history = rng.uniform(-init_scale, init_scale, size=params.delay_samples)

    results = []
    for gain in feedback_gains:
        point = replace(params, feedback_gain=float(gain))
        trace = simulate_loop(point, zero_drive, init_history=history)
        values = _slot_means(trace.samples, theta)[transient_discard:]
        counts, _ = np.histogram(values, bins=edges)
        results.append((float(gain), edges, counts))
    return results


def write_scan_csv(results, path) -> None:
    """Write a bifurcation scan as CSV rows alpha, bin_center, count."""
    lines = ["alpha,bin_center,count"]
    for gain, edges, counts in results:
        centers = 0.5 * (edges[:-1] + edges[1:])
        for center, count in zip(centers, counts):
            lines.append(f"{gain!r},{center!r},{int(count)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
