"""Benchmark dataset generators and loaders.

Every generator is a pure function of (seed, parameters): the returned
dataset carries its generation metadata and regenerating from it is
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError
from .readout import RegressionConfig, train_linear, predict
from .seeds import next_seed

CHANNEL_SYMBOLS = np.array([-3.0, -1.0, 1.0, 3.0])

# Multipath taps: emitted sample n mixes source symbols n+2 ... n-7 with
# these weights (two-symbol look-ahead, seven-symbol tail).
CHANNEL_TAPS = np.array(
    [0.08, -0.12, 1.0, 0.18, -0.1, 0.091, -0.05, 0.04, 0.03, 0.01]
)
CHANNEL_LOOKAHEAD = 2
CHANNEL_LOOKBACK = 7

SEGMENT_PERIOD = 12  # samples per sine/square segment


@dataclass(frozen=True)
class TaskDataset:
    """Aligned input/target sequences plus generation metadata.

    inputs: (n_channels, n_steps); targets: (n_steps,) for regression or
    (n_classes, n_steps) for classification. Classification datasets also
    carry per-segment labels and (start, stop) segment boundaries.
    """

    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)
    labels: list | None = None
    segments: list | None = None

    @property
    def n_steps(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    length: int = 9000
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ParameterError("snr_db must be finite")
        if self.length <= 15:
            raise ParameterError("length must exceed the channel memory span (15)")


def gen_narma10(length: int, seed: int) -> TaskDataset:
    """Tenth-order nonlinear auto-regressive sequence driven by uniform noise.

    Inputs are i.i.d. uniform on [0, 0.5); the target at step n is
    0.3*y[n-1] + 0.05*y[n-1]*sum(y[n-10..n-1]) + 1.5*u[n-10]*u[n-1] + 0.1
    with zero initial history, so it depends only on inputs before n. The
    recurrence occasionally diverges; such draws are rejected and regenerated
    from a derived seed, with the rejection count recorded.
    """
    if length < 10:
        raise ParameterError("length must be >= 10")
    regenerations = 0
    effective_seed = seed
    while True:
        rng = np.random.default_rng(effective_seed)
        u = rng.uniform(0.0, 0.5, size=length)
        y = np.zeros(length)
        stable = True
        for n in range(10, length):
            y[n] = (
                0.3 * y[n - 1]
                + 0.05 * y[n - 1] * y[n - 10 : n].sum()
                + 1.5 * u[n - 10] * u[n - 1]
                + 0.1
            )
            if abs(y[n]) > 1.0:
                stable = False
                break
        if stable:
            break
        regenerations += 1
        effective_seed = next_seed(effective_seed)
    meta = {
        "generator": "narma10",
        "seed": seed,
        "effective_seed": effective_seed,
        "length": length,
        "regenerations": regenerations,
    }
    return TaskDataset(inputs=u[np.newaxis, :], targets=y, meta=meta)


def linear_channel(symbols: np.ndarray) -> np.ndarray:
    """Multipath mixing of a symbol stream; returns the fully-defined range.

    Output m corresponds to source index m + CHANNEL_LOOKBACK.
    """
    symbols = np.asarray(symbols, dtype=float)
    if symbols.ndim != 1 or symbols.size <= len(CHANNEL_TAPS) - 1:
        raise ParameterError("symbol stream shorter than the channel memory")
    full = np.convolve(symbols, CHANNEL_TAPS)
    return full[CHANNEL_LOOKBACK + CHANNEL_LOOKAHEAD : symbols.size]


def channel_nonlinearity(mixed: np.ndarray) -> np.ndarray:
    """Memoryless receiver distortion applied after the multipath mixing."""
    return mixed + 0.036 * mixed**2 - 0.011 * mixed**3


def gen_channel(config: ChannelConfig) -> TaskDataset:
    """Noisy nonlinear wireless channel; the task is to recover the symbols.

    Symbols are i.i.d. uniform over {-3, -1, +1, +3}. The noise variance is
    set from the empirical power of the mixed (pre-distortion) signal so the
    requested SNR holds for the generated stream. Edge samples whose mixing
    window is incomplete are trimmed, leaving `length` aligned pairs.
    """
    rng = np.random.default_rng(config.seed)
    raw_length = config.length + CHANNEL_LOOKBACK + CHANNEL_LOOKAHEAD
    symbols = CHANNEL_SYMBOLS[rng.integers(0, 4, size=raw_length)]
    mixed = linear_channel(symbols)
    signal_power = np.mean(mixed**2)
    noise_std = np.sqrt(signal_power * 10.0 ** (-config.snr_db / 10.0))
    noise = rng.normal(0.0, noise_std, size=mixed.size)
    received = channel_nonlinearity(mixed) + noise
    aligned = symbols[CHANNEL_LOOKBACK : raw_length - CHANNEL_LOOKAHEAD]
    meta = {
        "generator": "channel",
        "seed": config.seed,
        "snr_db": config.snr_db,
        "length": config.length,
        "noise_std": noise_std,
    }
    return TaskDataset(inputs=received[np.newaxis, :], targets=aligned, meta=meta)


def gen_sine_square(n_segments: int, seed: int) -> TaskDataset:
    """Random concatenation of one-period sine and square segments.

    Each segment is 12 samples of either sin(2*pi*(t+1/2)/12) or a square
    wave (+1 for the first half period, -1 for the second), chosen by a fair
    coin. The target is 0 over sine segments and 1 over square segments.
    """
    if n_segments < 1:
        raise ParameterError("n_segments must be >= 1")
    rng = np.random.default_rng(seed)
    kinds = rng.integers(0, 2, size=n_segments)  # 0 = sine, 1 = square
    t = np.arange(SEGMENT_PERIOD)
    sine = np.sin(2.0 * np.pi * (t + 0.5) / SEGMENT_PERIOD)
    square = np.where(t < SEGMENT_PERIOD // 2, 1.0, -1.0)
    inputs = np.where(kinds[:, np.newaxis] == 0, sine, square).ravel()
    targets = np.repeat(kinds.astype(float), SEGMENT_PERIOD)
    segments = [
        (i * SEGMENT_PERIOD, (i + 1) * SEGMENT_PERIOD) for i in range(n_segments)
    ]
    meta = {"generator": "sine_square", "seed": seed, "n_segments": n_segments}
    return TaskDataset(
        inputs=inputs[np.newaxis, :],
        targets=targets,
        meta=meta,
        labels=list(map(int, kinds)),
        segments=segments,
    )


def gen_memory_task(
    length: int, delay: int, pair_delay: int | None = None, seed: int = 0
) -> TaskDataset:
    """Recall task: reproduce the input from `delay` steps ago.

    With pair_delay the target is the product of the two delayed inputs.
    The first max-delay steps are trimmed so every pair is defined.
    """
    if delay < 0 or (pair_delay is not None and pair_delay < 0):
        raise ParameterError("delays must be >= 0")
    max_delay = max(delay, pair_delay or 0)
    if max_delay >= length:
        raise ParameterError(f"delay {max_delay} >= length {length}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=length)
    emitted = length - max_delay
    targets = u[max_delay - delay : max_delay - delay + emitted]
    if pair_delay is not None:
        targets = targets * u[max_delay - pair_delay : max_delay - pair_delay + emitted]
    meta = {
        "generator": "memory",
        "seed": seed,
        "length": length,
        "delay": delay,
        "pair_delay": pair_delay,
    }
    return TaskDataset(inputs=u[np.newaxis, max_delay:], targets=targets, meta=meta)


@dataclass(frozen=True)
class MemoryCapacityCurve:
    delays: np.ndarray
    capacities: np.ndarray
    total: float


def memory_capacity(
    run_states,
    max_delay: int,
    train_steps: int = 1000,
    test_steps: int = 1000,
    washout: int = 200,
    seed: int = 0,
    ridge_lambda: float = 0.0,
) -> MemoryCapacityCurve:
    """Per-delay recall quality of a reservoir, and its total.

    run_states maps an input array (1, L) to reservoir states (or a
    StateMatrix). For each delay k up to max_delay a linear readout is
    trained to recover the input k steps back; the capacity at k is the
    squared Pearson correlation between target and prediction on held-out
    data. The input sequence is drawn once and shared across delays.
    """
    if max_delay < 1:
        raise ParameterError("max_delay must be >= 1")
    if washout < max_delay:
        raise ParameterError("washout must cover max_delay")
    length = washout + train_steps + test_steps
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=length)
    states = run_states(u[np.newaxis, :])
    from .readout import _as_array  # local import to avoid exporting the helper

    x = _as_array(states)
    train_cols = slice(washout, washout + train_steps)
    test_cols = slice(washout + train_steps, length)
    config = RegressionConfig(ridge_lambda=ridge_lambda, washout=0)

    delays = np.arange(max_delay + 1)
    capacities = np.zeros(max_delay + 1)
    for k in delays:
        target = np.empty(length)
        target[k:] = u[: length - k] if k else u
        target[:k] = 0.0  # never reached: washout >= max_delay
        w = train_linear(x[:, train_cols], target[train_cols], config)
        estimate = predict(x[:, test_cols], w)
        truth = target[test_cols]
        denom = np.std(truth) * np.std(estimate)
        if denom == 0:
            capacities[k] = 0.0
        else:
            corr = np.mean((truth - truth.mean()) * (estimate - estimate.mean())) / denom
            capacities[k] = corr**2
    return MemoryCapacityCurve(
        delays=delays, capacities=capacities, total=float(capacities.sum())
    )


def write_features(path, utterances, n_channels: int) -> None:
    """Serialize (label, steps-array) pairs in the plain-text feature format.

    Each steps-array has shape (n_steps, n_channels): one line per time step.
    """
    lines = [f"channels={n_channels}"]
    for label, steps in utterances:
        steps = np.asarray(steps, dtype=float)
        if steps.ndim != 2 or steps.shape[1] != n_channels:
            raise ParameterError(
                f"utterance array must be (n_steps, {n_channels}), got {steps.shape}"
            )
        lines.append(f"label={int(label)} steps={steps.shape[0]}")
        for row in steps:
            lines.append(" ".join(repr(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_features(path) -> TaskDataset:
    """Parse a multi-channel classification corpus from the feature format.

    The file starts with `channels=<K>`; each utterance contributes a
    `label=<int> steps=<L>` line followed by L lines of K values. Returns the
    concatenated inputs, per-class +/-1 target rows (classes are the sorted
    distinct labels), utterance labels and segment boundaries.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise FormatError("empty feature file", line=1)
    header = lines[0].strip()
    if not header.startswith("channels="):
        raise FormatError(f"expected 'channels=<K>', got {header!r}", line=1)
    try:
        n_channels = int(header.split("=", 1)[1])
    except ValueError:
        raise FormatError(f"bad channel count in {header!r}", line=1) from None
    if n_channels < 1:
        raise FormatError("channel count must be >= 1", line=1)

    utterances = []
    labels = []
    idx = 1
    while idx < len(lines):
        line = lines[idx].strip()
        if not line:
            idx += 1
            continue
        parts = dict(
            item.split("=", 1) for item in line.split() if "=" in item
        )
        if "label" not in parts or "steps" not in parts:
            raise FormatError(
                f"expected 'label=<int> steps=<L>', got {line!r}", line=idx + 1
            )
        try:
            label = int(parts["label"])
            n_steps = int(parts["steps"])
        except ValueError:
            raise FormatError(f"bad utterance header {line!r}", line=idx + 1) from None
        if n_steps < 1:
            raise FormatError("utterance must have at least one step", line=idx + 1)
        block = np.empty((n_steps, n_channels))
        for row in range(n_steps):
            row_idx = idx + 1 + row
            if row_idx >= len(lines):
                raise FormatError("unexpected end of file inside utterance", line=row_idx + 1)
            fields = lines[row_idx].split()
            if len(fields) != n_channels:
                raise FormatError(
                    f"expected {n_channels} values, got {len(fields)}", line=row_idx + 1
                )
            try:
                block[row] = [float(v) for v in fields]
            except ValueError:
                raise FormatError("non-numeric feature value", line=row_idx + 1) from None
        utterances.append(block)
        labels.append(label)
        idx += 1 + n_steps

    if not utterances:
        raise FormatError("feature file contains no utterances", line=2)

    inputs = np.vstack(utterances).T  # (n_channels, total_steps)
    segments = []
    start = 0
    for block in utterances:
        segments.append((start, start + block.shape[0]))
        start += block.shape[0]
    classes = sorted(set(labels))
    targets = class_targets(labels, segments, classes, inputs.shape[1])
    meta = {
        "generator": "features",
        "path": str(path),
        "classes": classes,
        "n_utterances": len(utterances),
    }
    return TaskDataset(
        inputs=inputs, targets=targets, meta=meta, labels=labels, segments=segments
    )


def class_targets(labels, segments, classes, n_steps: int) -> np.ndarray:
    """One +/-1 target row per class: +1 over that class's segments."""
    targets = -np.ones((len(classes), n_steps))
    index = {c: i for i, c in enumerate(classes)}
    for label, (start, stop) in zip(labels, segments):
        targets[index[label], start:stop] = 1.0
    return targets


def make_separable_corpus(
    n_classes: int = 5,
    n_utterances: int = 100,
    n_channels: int = 8,
    n_steps: int = 20,
    jitter: float = 0.05,
    seed: int = 0,
):
    """Synthetic classification corpus: per-class prototypes plus jitter.

    Returns (utterances, n_channels) in the format write_features expects.
    Class labels cycle so every class appears equally often.
    """
    rng = np.random.default_rng(seed)
    prototypes = rng.uniform(-1.0, 1.0, size=(n_classes, n_steps, n_channels))
    utterances = []
    for i in range(n_utterances):
        label = i % n_classes
        noise = rng.normal(0.0, jitter, size=(n_steps, n_channels))
        utterances.append((label, prototypes[label] + noise))
    return utterances, n_channels


def export_csv(dataset: TaskDataset, path) -> None:
    """Write a dataset as CSV rows n, u_1..u_K, y.

    For classification datasets y is the per-step class label.
    """
    k = dataset.inputs.shape[0]
    if dataset.targets.ndim == 1:
        y = dataset.targets
    else:
        y = np.empty(dataset.n_steps)
        for label, (start, stop) in zip(dataset.labels, dataset.segments):
            y[start:stop] = label
    header = "n," + ",".join(f"u_{j + 1}" for j in range(k)) + ",y"
    lines = [header]
    for n in range(dataset.n_steps):
        values = ",".join(repr(v) for v in dataset.inputs[:, n])
        lines.append(f"{n},{values},{y[n]!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
