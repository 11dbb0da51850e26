"""Resistive-crossbar compute backend and its ideal digital counterpart.

Weights live as differential conductance pairs (g+, g-) on subarray-
partitioned crossbars. Reads accumulate column currents per subarray,
pass them through a clipping uniform ADC, and combine partial sums
digitally. Nonidealities: conductance grid snapping, cycle-to-cycle
programming noise, static device-to-device gain factors, and a first-
order IR-drop attenuation.

Both backends expose the same surface: program(layer, w), matvec,
matvec_t, and an event bus feeding cost-accounting observers. Reads are
pure (no randomness); only programming draws noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import check_matrix

EVENT_KINDS = ("forward_read", "transposed_read", "program_write", "gradient_compute")


@dataclass(frozen=True)
class Event:
    """One cost-accounting record; reads cover `vectors` input vectors on
    `subarrays` subarrays (vectors * subarrays physical read events)."""

    kind: str
    layer: int
    rows: int
    cols: int
    subarrays: int
    vectors: int = 1
    macs: int = 0


class EventBus:
    """Fan-out of events to registered observers, with a mute switch."""

    def __init__(self):
        self.observers: list = []
        self.enabled = True

    def emit(self, event: Event) -> None:
        if self.enabled:
            for obs in self.observers:
                obs(event)


@dataclass(frozen=True)
class CrossbarConfig:
    """Subarray geometry, conversion precision, and nonideality knobs.

    wire_r is the per-cell wire resistance as a fraction of 1/g_max;
    adc_range_frac rescales the worst-case ADC full scale
    (subarray_rows * g_max * V_max) and defaults to 1.0, i.e. the plain
    worst-case model. adc_bits=None bypasses conversion entirely and is
    meant for oracle tests only.
    """

    subarray_rows: int = 128
    subarray_cols: int = 128
    adc_bits: int | None = 8
    g_min: float = 0.01
    g_max: float = 1.0
    weight_bits: int = 8
    d2d_sigma: float = 0.0
    c2c_sigma: float = 0.0
    wire_r: float = 0.0
    w_range: float = 1.0
    adc_range_frac: float = 1.0

    def __post_init__(self):
        if self.subarray_rows < 1 or self.subarray_cols < 1:
            raise ValueError("subarray dims must be >= 1")
        if not (0.0 < self.g_min < self.g_max):
            raise ValueError(f"need 0 < g_min < g_max, got {self.g_min}, {self.g_max}")
        if self.adc_bits is not None and self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1 (or None to bypass)")
        if self.weight_bits < 1:
            raise ValueError("weight_bits must be >= 1")
        if self.d2d_sigma < 0 or self.c2c_sigma < 0 or self.wire_r < 0:
            raise ValueError("sigmas and wire_r must be >= 0")
        if not self.w_range > 0:
            raise ValueError("w_range must be positive")
        if not self.adc_range_frac > 0:
            raise ValueError("adc_range_frac must be positive")

    @property
    def k_scale(self) -> float:
        """Conductance per unit weight."""
        return (self.g_max - self.g_min) / self.w_range

    @property
    def g_step(self) -> float:
        """Conductance grid step (2^weight_bits levels over [g_min, g_max])."""
        if self.weight_bits == 1:
            return self.g_max - self.g_min
        return (self.g_max - self.g_min) / (2**self.weight_bits - 1)

    def adc_fullscale(self, n_rows: int | None = None) -> float:
        rows = self.subarray_rows if n_rows is None else n_rows
        return rows * self.g_max * self.adc_range_frac

    def subarray_grid(self, rows: int, cols: int) -> tuple[int, int]:
        return (-(-rows // self.subarray_rows), -(-cols // self.subarray_cols))


def adc_read(current, cfg: CrossbarConfig, fullscale: float | None = None):
    """Quantize a column current onto 2^adc_bits levels over [0, fullscale].

    Values above full scale clip; the level grid includes both endpoints
    (1 bit gives exactly {0, fullscale}). adc_bits=None returns the
    current unchanged (ideal converter, oracle tests only).
    """
    full = cfg.adc_fullscale() if fullscale is None else fullscale
    if cfg.adc_bits is None:
        return np.asarray(current, dtype=np.float64)
    i = np.clip(np.asarray(current, dtype=np.float64), 0.0, full)
    n_levels = 2**cfg.adc_bits
    step = full / (n_levels - 1)
    return np.rint(i / step) * step


def ir_drop_attenuation(i_local: int, j_local: int, g_cell: float, cfg: CrossbarConfig) -> float:
    """First-order series-resistance attenuation for a cell at local
    subarray position (i_local, j_local); 1.0 when wire_r == 0."""
    return 1.0 / (1.0 + cfg.wire_r * (i_local + j_local) * (g_cell / cfg.g_max))


def _ir_factors(g: np.ndarray, cfg: CrossbarConfig) -> np.ndarray:
    if cfg.wire_r == 0.0:
        return np.ones_like(g)
    li = (np.arange(g.shape[0]) % cfg.subarray_rows)[:, None]
    lj = (np.arange(g.shape[1]) % cfg.subarray_cols)[None, :]
    return 1.0 / (1.0 + cfg.wire_r * (li + lj) * (g / cfg.g_max))


@dataclass
class CrossbarArray:
    """One programmed crossbar: rows = input dim, cols = output dim.

    Conductance pairs are stored per cell; the static d2d gain factors
    are drawn once at creation and never change, while every program
    event redraws c2c noise on the cells whose snapped target moved.
    """

    rows: int
    cols: int
    cfg: CrossbarConfig
    g_pos: np.ndarray = field(repr=False, default=None)
    g_neg: np.ndarray = field(repr=False, default=None)
    s_pos: np.ndarray = field(repr=False, default=None)
    s_neg: np.ndarray = field(repr=False, default=None)
    target_pos: np.ndarray = field(repr=False, default=None)
    target_neg: np.ndarray = field(repr=False, default=None)
    clipped_weights: int = 0
    program_events: int = 0
    _eff_pos: np.ndarray | None = field(repr=False, default=None)
    _eff_neg: np.ndarray | None = field(repr=False, default=None)

    @property
    def n_subarrays(self) -> int:
        gr, gc = self.cfg.subarray_grid(self.rows, self.cols)
        return gr * gc

    def effective(self) -> tuple[np.ndarray, np.ndarray]:
        """Read-path conductances: stored value x d2d gain x IR factor."""
        if self._eff_pos is None:
            self._eff_pos = self.g_pos * self.s_pos * _ir_factors(self.g_pos, self.cfg)
            self._eff_neg = self.g_neg * self.s_neg * _ir_factors(self.g_neg, self.cfg)
        return self._eff_pos, self._eff_neg


def _snap_conductance(g: np.ndarray, cfg: CrossbarConfig) -> np.ndarray:
    return cfg.g_min + np.rint((g - cfg.g_min) / cfg.g_step) * cfg.g_step


def program_weights(w, cfg: CrossbarConfig, rng: np.random.Generator,
                    arr: CrossbarArray | None = None) -> CrossbarArray:
    """Map a logical weight matrix (out x in) onto conductance pairs.

    Targets g+ = g_min + max(w,0)*k and g- = g_min + max(-w,0)*k are
    snapped to the conductance grid; cells whose snapped target changed
    get multiplied by (1 + eps), eps ~ N(0, c2c_sigma), then clipped to
    bounds. Out-of-range weights are clipped and counted.
    """
    w = check_matrix(w, "weights")
    wt = w.T  # physical layout: voltages enter on the input dimension
    rows, cols = wt.shape

    if arr is None:
        arr = CrossbarArray(rows=rows, cols=cols, cfg=cfg)
        if cfg.d2d_sigma > 0:
            arr.s_pos = 1.0 + rng.normal(0.0, cfg.d2d_sigma, size=(rows, cols))
            arr.s_neg = 1.0 + rng.normal(0.0, cfg.d2d_sigma, size=(rows, cols))
            np.clip(arr.s_pos, 0.0, None, out=arr.s_pos)
            np.clip(arr.s_neg, 0.0, None, out=arr.s_neg)
        else:
            arr.s_pos = np.ones((rows, cols))
            arr.s_neg = np.ones((rows, cols))
        arr.target_pos = np.full((rows, cols), np.nan)
        arr.target_neg = np.full((rows, cols), np.nan)
        arr.g_pos = np.full((rows, cols), cfg.g_min)
        arr.g_neg = np.full((rows, cols), cfg.g_min)
    elif (arr.rows, arr.cols) != (rows, cols):
        raise ValueError(f"array is {arr.rows}x{arr.cols}, weights map to {rows}x{cols}")

    arr.clipped_weights += int(np.count_nonzero(np.abs(wt) > cfg.w_range))
    wc = np.clip(wt, -cfg.w_range, cfg.w_range)
    tgt_pos = _snap_conductance(cfg.g_min + np.maximum(wc, 0.0) * cfg.k_scale, cfg)
    tgt_neg = _snap_conductance(cfg.g_min + np.maximum(-wc, 0.0) * cfg.k_scale, cfg)

    for tgt, prev, g in ((tgt_pos, arr.target_pos, arr.g_pos),
                         (tgt_neg, arr.target_neg, arr.g_neg)):
        changed = tgt != prev
        if cfg.c2c_sigma > 0:
            n = int(np.count_nonzero(changed))
            if n:
                eps = rng.normal(0.0, cfg.c2c_sigma, size=n)
                g[changed] = np.clip(tgt[changed] * (1.0 + eps), cfg.g_min, cfg.g_max)
        else:
            g[changed] = tgt[changed]
    arr.target_pos = tgt_pos
    arr.target_neg = tgt_neg
    arr.program_events += 1
    arr._eff_pos = arr._eff_neg = None
    return arr


def _read_currents(geff: np.ndarray, x: np.ndarray, cfg: CrossbarConfig,
                   along_rows: bool, fullscale: float) -> np.ndarray:
    """ADC-per-subarray partial sums accumulated digitally.

    along_rows=True drives the input on the row dimension (forward read);
    False drives columns (transposed read). x must be non-negative.
    """
    drive_dim, out_dim = (0, 1) if along_rows else (1, 0)
    n_drive = geff.shape[drive_dim]
    n_out = geff.shape[out_dim]
    block = cfg.subarray_rows if along_rows else cfg.subarray_cols
    acc = np.zeros((n_out, x.shape[1]))
    for start in range(0, n_drive, block):
        stop = min(start + block, n_drive)
        g_blk = geff[start:stop, :] if along_rows else geff[:, start:stop].T
        currents = g_blk.T @ x[start:stop, :]
        acc += adc_read(currents, cfg, fullscale=fullscale)
    return acc


def _signed_matvec(arr: CrossbarArray, x: np.ndarray, cfg: CrossbarConfig,
                   along_rows: bool) -> np.ndarray:
    eff_pos, eff_neg = arr.effective()
    n_drive = arr.rows if along_rows else arr.cols
    if x.shape[0] != n_drive:
        raise ValueError(f"drive vector has {x.shape[0]} entries, array expects {n_drive}")
    block_rows = cfg.subarray_rows if along_rows else cfg.subarray_cols
    fullscale = cfg.adc_fullscale(block_rows)

    out = None
    for phase in (1.0, -1.0):
        xin = np.maximum(phase * x, 0.0)
        if phase < 0 and not np.any(xin):
            break  # non-negative drive takes a single phase
        part = (_read_currents(eff_pos, xin, cfg, along_rows, fullscale)
                - _read_currents(eff_neg, xin, cfg, along_rows, fullscale))
        out = phase * part if out is None else out + phase * part
    return out / cfg.k_scale


def analog_matvec(arr: CrossbarArray, x, cfg: CrossbarConfig | None = None) -> np.ndarray:
    """Forward crossbar read: y = W x with W the programmed weights.

    Accepts a vector or a (rows x batch) matrix; returns matching shape.
    """
    cfg = arr.cfg if cfg is None else cfg
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    y = _signed_matvec(arr, x, cfg, along_rows=True)
    return y[:, 0] if squeeze else y


def analog_matvec_transposed(arr: CrossbarArray, x, cfg: CrossbarConfig | None = None) -> np.ndarray:
    """Transposed read (duplicated, rotated periphery): y = W^T x."""
    cfg = arr.cfg if cfg is None else cfg
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    y = _signed_matvec(arr, x, cfg, along_rows=False)
    return y[:, 0] if squeeze else y


class DigitalBackend:
    """Ideal reference backend: exact float64 matvec on stored weights."""

    name = "digital"

    def __init__(self):
        self.bus = EventBus()
        self._weights: dict[int, np.ndarray] = {}

    def program(self, layer: int, w: np.ndarray) -> None:
        self._weights[layer] = np.array(w, dtype=np.float64)
        self.bus.emit(Event("program_write", layer, w.shape[0], w.shape[1], 1))

    def ensure_programmed(self, mlp) -> None:
        for i, w in enumerate(mlp.weights, start=1):
            if i not in self._weights:
                self.program(i, w)

    def matvec(self, layer: int, x: np.ndarray) -> np.ndarray:
        w = self._weights[layer]
        self.bus.emit(Event("forward_read", layer, w.shape[0], w.shape[1], 1,
                            vectors=x.shape[1] if x.ndim == 2 else 1))
        return w @ x

    def matvec_t(self, layer: int, x: np.ndarray) -> np.ndarray:
        w = self._weights[layer]
        self.bus.emit(Event("transposed_read", layer, w.shape[0], w.shape[1], 1,
                            vectors=x.shape[1] if x.ndim == 2 else 1))
        return w.T @ x

    def diagnostics(self) -> dict:
        return {}


class AnalogBackend:
    """Crossbar-simulating backend; one array per layer, exclusively owned.

    Programming consumes the backend's rng (d2d once per array, c2c per
    affected cell per program event); reads are deterministic.
    """

    name = "analog"

    def __init__(self, cfg: CrossbarConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.bus = EventBus()
        self.arrays: dict[int, CrossbarArray] = {}

    def program(self, layer: int, w: np.ndarray) -> None:
        self.arrays[layer] = program_weights(w, self.cfg, self.rng, self.arrays.get(layer))
        arr = self.arrays[layer]
        self.bus.emit(Event("program_write", layer, w.shape[0], w.shape[1], arr.n_subarrays))

    def ensure_programmed(self, mlp) -> None:
        for i, w in enumerate(mlp.weights, start=1):
            if i not in self.arrays:
                self.program(i, w)

    def matvec(self, layer: int, x: np.ndarray) -> np.ndarray:
        arr = self.arrays[layer]
        self.bus.emit(Event("forward_read", layer, arr.cols, arr.rows, arr.n_subarrays,
                            vectors=x.shape[1] if x.ndim == 2 else 1))
        return analog_matvec(arr, x, self.cfg)

    def matvec_t(self, layer: int, x: np.ndarray) -> np.ndarray:
        arr = self.arrays[layer]
        self.bus.emit(Event("transposed_read", layer, arr.cols, arr.rows, arr.n_subarrays,
                            vectors=x.shape[1] if x.ndim == 2 else 1))
        return analog_matvec_transposed(arr, x, self.cfg)

    def diagnostics(self) -> dict:
        return {
            "clipped_weights": int(sum(a.clipped_weights for a in self.arrays.values())),
            "program_events": int(sum(a.program_events for a in self.arrays.values())),
        }
