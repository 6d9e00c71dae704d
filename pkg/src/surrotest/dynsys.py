"""Source-process generators.

Discrete maps (logistic, Henon), continuous chaotic flows (Lorenz, Rossler,
Chua) integrated with an adaptive embedded Runge-Kutta 5(4) scheme, and the
stochastic control process: AR(1) noise pushed through the static transform
y = x * sqrt(|x|).

All generators are deterministic functions of (parameters, seed).  Batches
of independent realizations use per-realization RNG streams derived from the
batch seed (see ``seeding``), so results do not depend on generation order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import DivergenceError, LengthError, ParameterError, StiffnessError
from .seeding import substream
from .series import TimeSeries

# Default burn-in discarded before sampling: enough to land on the
# attractor / in the stationary regime.
MAP_BURN_IN = 1000          # iterations
FLOW_BURN_IN = 100.0        # model time units
NOISE_BURN_IN = 100         # steps

# Sampling intervals chosen so a 32-sample window spans a few
# characteristic oscillations of each flow.
FLOW_DT = {"lorenz": 0.05, "rossler": 0.25, "chua": 0.05}

ESCAPE_LIMIT = 1e6          # map iterates
ESCAPE_STATE_LIMIT = 1e12   # accepted flow states


# ---------------------------------------------------------------------------
# Parameter records (defaults are the chaotic-regime values)
# ---------------------------------------------------------------------------

@dataclass
class MapParams:
    """Logistic growth rate and Henon coefficients."""

    r: float = 4.0
    a: float = 1.4
    b: float = 0.3

    def __post_init__(self):
        if not (np.isfinite(self.r) and 0.0 < self.r <= 4.0):
            raise ParameterError(f"logistic rate must be in (0, 4], got {self.r}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ParameterError("Henon coefficients must be finite")


@dataclass
class FlowParams:
    """Coefficients of the three flows, all dimensionless."""

    lorenz_sigma: float = 10.0
    lorenz_rho: float = 28.0
    lorenz_beta: float = 8.0 / 3.0
    rossler_a: float = 0.2
    rossler_b: float = 0.2
    rossler_c: float = 5.7
    chua_alpha: float = 15.6
    chua_beta: float = 28.0
    chua_m0: float = -8.0 / 7.0
    chua_m1: float = -5.0 / 7.0


@dataclass
class NoiseParams:
    """AR(1) coefficient; innovations are zero-mean unit-variance normal."""

    alpha: float = 0.2

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and abs(self.alpha) < 1.0):
            raise ParameterError(
                f"AR coefficient must satisfy |alpha| < 1 for stationarity, "
                f"got {self.alpha}"
            )


# ---------------------------------------------------------------------------
# Discrete maps
# ---------------------------------------------------------------------------

def iterate_logistic(x0: float, r: float, n: int, burn_in: int = 0) -> TimeSeries:
    """n iterates of x -> r*x*(1-x), after discarding ``burn_in`` steps."""
    if not (np.isfinite(x0) and 0.0 <= x0 <= 1.0):
        raise ParameterError(f"x0 must be in [0, 1], got {x0}")
    if not (np.isfinite(r) and 0.0 < r <= 4.0):
        raise ParameterError(f"r must be in (0, 4], got {r}")
    out = np.empty(n)
    x = float(x0)
    for i in range(burn_in + n):
        x = r * x * (1.0 - x)
        # The exact map never leaves [0, 1] for r <= 4; clamp the float
        # dust at the x = 0.5 peak that would otherwise escape.
        x = min(max(x, 0.0), 1.0)
        if i >= burn_in:
            out[i - burn_in] = x
    return TimeSeries(out, meta={"system": "logistic", "r": r, "x0": x0,
                                 "burn_in": burn_in})


def henon_step(x: float, y: float, params: MapParams) -> tuple:
    """One application of the Henon map."""
    return 1.0 - params.a * x * x + y, params.b * x


def iterate_henon(x0: float, y0: float, params: MapParams, n: int,
                  burn_in: int = 0) -> TimeSeries:
    """n iterates of the Henon map; the scalar series is the x-coordinate."""
    if not (np.isfinite(x0) and np.isfinite(y0)):
        raise ParameterError("initial state must be finite")
    out = np.empty(n)
    x, y = float(x0), float(y0)
    for i in range(burn_in + n):
        x, y = henon_step(x, y, params)
        if abs(x) > ESCAPE_LIMIT:
            raise DivergenceError(
                f"Henon trajectory escaped (|x| > {ESCAPE_LIMIT:g}) at step {i}",
                step=i,
            )
        if i >= burn_in:
            out[i - burn_in] = x
    return TimeSeries(out, meta={"system": "henon", "a": params.a, "b": params.b,
                                 "x0": x0, "y0": y0, "burn_in": burn_in})


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------

def chua_nonlinearity(x, m0: float, m1: float):
    """Piecewise-linear diode characteristic of the Chua model.

    Slope m0 on |x| <= 1, slope m1 outside, continuous at the kinks.
    """
    return m1 * x + 0.5 * (m0 - m1) * (np.abs(x + 1.0) - np.abs(x - 1.0))


def flow_derivative(system: str, state, params: FlowParams | None = None) -> np.ndarray:
    """Right-hand side of the named flow at ``state``.

    ``state`` may be a single 3-vector or an (N, 3) batch; the derivative
    has the same shape.
    """
    if params is None:
        params = FlowParams()
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != 3:
        raise ParameterError(f"state must have 3 components, got shape {state.shape}")
    if not np.all(np.isfinite(state)):
        raise ParameterError("state must be finite")
    x, y, z = state[..., 0], state[..., 1], state[..., 2]
    if system == "lorenz":
        dx = params.lorenz_sigma * (y - x)
        dy = x * (params.lorenz_rho - z) - y
        dz = x * y - params.lorenz_beta * z
    elif system == "rossler":
        dx = -y - z
        dy = x + params.rossler_a * y
        dz = params.rossler_b + z * (x - params.rossler_c)
    elif system == "chua":
        fx = chua_nonlinearity(x, params.chua_m0, params.chua_m1)
        dx = params.chua_alpha * (y - x - fx)
        dy = x - y + z
        dz = -params.chua_beta * y
    else:
        raise ParameterError(f"unknown flow {system!r}; expected lorenz|rossler|chua")
    return np.stack([dx, dy, dz], axis=-1)


# Dormand-Prince 5(4) tableau.  The last row of A equals B5, giving the
# first-same-as-last property (k7 of an accepted step is k1 of the next).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# B5 - B4: coefficients of the embedded error estimate.
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
                  22 / 525, -1 / 40])

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def _error_norm(err: np.ndarray, scale: np.ndarray) -> float:
    q = (err / scale) ** 2
    if q.ndim <= 1:
        return float(np.sqrt(q.mean()))
    # Batched states: control the worst realization.
    return float(np.sqrt(q.reshape(-1, q.shape[-1]).mean(axis=-1).max()))


def rk45_integrate(f, y0, t_end: float, dt_sample: float,
                   rel_tol: float = 1e-9, abs_tol: float = 1e-12,
                   t0: float = 0.0):
    """Adaptive embedded Runge-Kutta 5(4) with sampling on a fixed grid.

    Integrates dy/dt = f(t, y) from ``t0`` and records the state at every
    positive multiple of ``dt_sample`` up to ``t_end`` (steps are clamped
    to sample boundaries, so samples carry no interpolation error).

    Parameters
    ----------
    f : callable
        Right-hand side ``f(t, y) -> dy/dt``; must accept y of the same
        shape as ``y0`` (scalars are promoted to shape-(1,) arrays).
    y0 : array_like
        Initial state; any shape, e.g. (3,) for one flow or (N, 3) for a
        batch integrated in lockstep under a shared error control.

    Returns
    -------
    (times, states) : (ndarray of shape (m,), ndarray of shape (m, *y0.shape))
    """
    if not (np.isfinite(t_end) and t_end > t0):
        raise ParameterError(f"t_end must exceed t0, got {t_end}")
    if not (np.isfinite(dt_sample) and dt_sample > 0):
        raise ParameterError(f"dt_sample must be positive, got {dt_sample}")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ParameterError("tolerances must be positive")

    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    span = t_end - t0
    n_samples = int(np.floor(span / dt_sample + 1e-9))
    if n_samples < 1:
        raise ParameterError("no sample times fall inside the integration span")
    sample_times = t0 + dt_sample * np.arange(1, n_samples + 1)
    h_floor = 1e-12 * span

    times = np.empty(n_samples)
    states = np.empty((n_samples,) + y.shape)

    t = t0
    h = min(dt_sample, span) * 0.01
    k1 = f(t, y)
    ks = [None] * 7
    for i_sample, t_target in enumerate(sample_times):
        while t < t_target:
            h = min(h, t_target - t)
            if h < h_floor:
                raise StiffnessError(
                    f"step size underflow ({h:.3e}) at t={t:.6g}; "
                    "the problem looks stiff"
                )
            hit_boundary = h >= (t_target - t)
            ks[0] = k1
            for s in range(1, 7):
                ys = y + h * sum(a * ks[j] for j, a in enumerate(_DP_A[s]))
                ks[s] = f(t + _DP_C[s] * h, ys)
            y_new = y + h * sum(b * ks[j] for j, b in enumerate(_DP_B5) if b != 0.0)
            if not np.all(np.isfinite(y_new)):
                # A wild trial step, not necessarily a lost trajectory.
                h = h * _MIN_FACTOR
                continue
            err = h * sum(e * ks[j] for j, e in enumerate(_DP_E) if e != 0.0)
            scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            norm = _error_norm(err, scale)
            if norm <= 1.0:
                t = t_target if hit_boundary else t + h
                y = y_new
                if np.max(np.abs(y)) > ESCAPE_STATE_LIMIT:
                    raise DivergenceError(
                        f"trajectory diverged near t={t:.6g}", time=t
                    )
                k1 = ks[6]  # FSAL
                factor = _MAX_FACTOR if norm == 0.0 else min(
                    _MAX_FACTOR, _SAFETY * norm ** -0.2
                )
                h = h * max(_MIN_FACTOR, factor)
            else:
                h = h * max(_MIN_FACTOR, _SAFETY * norm ** -0.2)
        times[i_sample] = t_target
        states[i_sample] = y
    return times, states


def flow_series(system: str, n: int, params: FlowParams | None = None,
                y0=None, seed: int | None = None,
                dt_sample: float | None = None, burn_in: float = FLOW_BURN_IN,
                rel_tol: float = 1e-9, abs_tol: float = 1e-12) -> TimeSeries:
    """x-coordinate of one flow trajectory, sampled after burn-in."""
    if params is None:
        params = FlowParams()
    if dt_sample is None:
        dt_sample = FLOW_DT[system]
    if y0 is None:
        y0 = _flow_initial_conditions(system, 1, seed if seed is not None else 0)[0]
    f = lambda t, y: flow_derivative(system, y, params)
    y_start = np.asarray(y0, dtype=float)
    if burn_in > 0:
        _, burn_states = rk45_integrate(f, y_start, t_end=burn_in,
                                        dt_sample=burn_in,
                                        rel_tol=rel_tol, abs_tol=abs_tol)
        y_start = burn_states[-1]
    _, states = rk45_integrate(f, y_start, t_end=n * dt_sample,
                               dt_sample=dt_sample,
                               rel_tol=rel_tol, abs_tol=abs_tol)
    return TimeSeries(states[:, 0], dt=dt_sample,
                      meta={"system": system, "seed": seed, "burn_in": burn_in})


# Reference attractor points used to seed independent initial conditions;
# perturbations stay well inside each basin of attraction.
_FLOW_REFERENCE = {
    "lorenz": (np.array([1.0, 1.0, 1.0]), 0.5),
    "rossler": (np.array([1.0, 1.0, 0.1]), 0.5),
    "chua": (np.array([0.1, 0.0, 0.0]), 0.05),
}


def _flow_initial_conditions(system: str, count: int, seed: int) -> np.ndarray:
    ref, scale = _FLOW_REFERENCE[system]
    y0 = np.empty((count, 3))
    for i in range(count):
        y0[i] = ref + substream(seed, i).uniform(-scale, scale, size=3)
    return y0


# ---------------------------------------------------------------------------
# AR(1) noise with a static nonlinear observation
# ---------------------------------------------------------------------------

def generate_ar1_nonlinear(params: NoiseParams, n: int, seed: int = 0,
                           burn_in: int = NOISE_BURN_IN,
                           x0: float | None = None,
                           innovations=None) -> TimeSeries:
    """AR(1) process observed through the static transform y = x*sqrt(|x|).

    The latent state starts in the stationary distribution
    Normal(0, 1/(1-alpha^2)) unless ``x0`` is given; a burn-in is applied
    on top for safety.  ``innovations`` overrides the random innovations
    (useful for deterministic checks) and must have length
    ``burn_in + n - 1``.
    """
    alpha = params.alpha
    if n < 1:
        raise ParameterError("need at least one sample")
    rng = np.random.default_rng(seed)
    start = float(x0) if x0 is not None else float(
        rng.normal(0.0, 1.0 / np.sqrt(1.0 - alpha * alpha))
    )
    n_innov = burn_in + n - 1
    if innovations is None:
        eps = rng.standard_normal(n_innov)
    else:
        eps = np.asarray(innovations, dtype=float)
        if eps.size != n_innov:
            raise ParameterError(f"expected {n_innov} innovations, got {eps.size}")

    path = np.empty(burn_in + n)
    path[0] = start
    for i, e in enumerate(eps):
        path[i + 1] = alpha * path[i] + e
    xs = path[burn_in:]
    y = xs * np.sqrt(np.abs(xs))
    return TimeSeries(y, meta={"system": "ar1", "alpha": alpha, "seed": seed,
                               "burn_in": burn_in})


# ---------------------------------------------------------------------------
# Realization batches
# ---------------------------------------------------------------------------

SYSTEMS = ("logistic", "henon", "lorenz", "rossler", "chua", "ar1")


def _default_params(system: str):
    if system in ("logistic", "henon"):
        return MapParams()
    if system in FLOW_DT:
        return FlowParams()
    return NoiseParams()


def _batch_logistic(L, N, seed, params):
    x = np.array([substream(seed, i).uniform(0.1, 0.9) for i in range(N)])
    out = np.empty((N, L))
    r = params.r
    for step in range(MAP_BURN_IN + L):
        x = np.clip(r * x * (1.0 - x), 0.0, 1.0)
        if step >= MAP_BURN_IN:
            out[:, step - MAP_BURN_IN] = x
    return out


_HENON_FIXED_X = 0.6313544770895048  # positive root of a*x^2 + (1-b)*x - 1 = 0


def _batch_henon(L, N, seed, params):
    ref = np.array([_HENON_FIXED_X, params.b * _HENON_FIXED_X])
    init = np.array([ref + substream(seed, i).uniform(-0.05, 0.05, size=2)
                     for i in range(N)])
    x, y = init[:, 0], init[:, 1]
    out = np.empty((N, L))
    for step in range(MAP_BURN_IN + L):
        x, y = 1.0 - params.a * x * x + y, params.b * x
        if np.max(np.abs(x)) > ESCAPE_LIMIT:
            raise DivergenceError(
                f"Henon batch escaped (|x| > {ESCAPE_LIMIT:g}) at step {step}",
                step=step,
            )
        if step >= MAP_BURN_IN:
            out[:, step - MAP_BURN_IN] = x
    return out


def _batch_flow(system, L, N, seed, params, rel_tol=1e-9, abs_tol=1e-12):
    dt = FLOW_DT[system]
    y0 = _flow_initial_conditions(system, N, seed)
    f = lambda t, y: flow_derivative(system, y, params)
    _, burn = rk45_integrate(f, y0, t_end=FLOW_BURN_IN, dt_sample=FLOW_BURN_IN,
                             rel_tol=rel_tol, abs_tol=abs_tol)
    _, states = rk45_integrate(f, burn[-1], t_end=L * dt, dt_sample=dt,
                               rel_tol=rel_tol, abs_tol=abs_tol)
    # states: (L, N, 3) -> x-coordinate per realization
    return states[:, :, 0].T.copy()


def _batch_ar1(L, N, seed, params):
    alpha = params.alpha
    sd = 1.0 / np.sqrt(1.0 - alpha * alpha)
    x = np.empty(N)
    eps = np.empty((N, NOISE_BURN_IN + L - 1))
    for i in range(N):
        rng = substream(seed, i)
        x[i] = rng.normal(0.0, sd)
        eps[i] = rng.standard_normal(NOISE_BURN_IN + L - 1)
    out = np.empty((N, NOISE_BURN_IN + L))
    out[:, 0] = x
    for t in range(eps.shape[1]):
        out[:, t + 1] = alpha * out[:, t] + eps[:, t]
    xs = out[:, NOISE_BURN_IN:]
    return xs * np.sqrt(np.abs(xs))


_BATCH_GENERATORS = {
    "logistic": _batch_logistic,
    "henon": _batch_henon,
    "lorenz": lambda L, N, seed, p: _batch_flow("lorenz", L, N, seed, p),
    "rossler": lambda L, N, seed, p: _batch_flow("rossler", L, N, seed, p),
    "chua": lambda L, N, seed, p: _batch_flow("chua", L, N, seed, p),
    "ar1": _batch_ar1,
}


def make_realizations(source, L: int, N: int, mode: str | None = None,
                      seed: int = 0, params=None) -> list:
    """N realizations of length L from a named system or a long record.

    ``mode="independent"`` (the default for named systems) draws fresh
    initial conditions per realization and discards a burn-in;
    ``mode="windowed"`` (the default for TimeSeries sources) copies
    windows at uniformly random start indices.  Deterministic given
    (source, params, seed).
    """
    if L < 8:
        raise ParameterError(f"realization length must be at least 8, got {L}")
    if N < 1:
        raise ParameterError(f"need at least one realization, got {N}")

    if isinstance(source, TimeSeries):
        mode = mode or "windowed"
        if mode != "windowed":
            raise ParameterError("a TimeSeries source requires windowed mode")
        return _windowed_realizations(source, L, N, seed)

    system = str(source)
    if system not in SYSTEMS:
        raise ParameterError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    mode = mode or "independent"
    if mode != "independent":
        raise ParameterError("named systems generate in independent mode")
    if params is None:
        params = _default_params(system)
    rows = _BATCH_GENERATORS[system](L, N, seed, params)
    dt = FLOW_DT.get(system)
    meta = {"system": system, "seed": seed, "mode": mode, "params": asdict(params)}
    return [TimeSeries(rows[i], dt=dt, meta={**meta, "index": i})
            for i in range(N)]


def _windowed_realizations(source: TimeSeries, L: int, N: int, seed: int) -> list:
    samples = source.samples
    if samples.size < L:
        raise LengthError(
            f"source length {samples.size} is shorter than window length {L}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    starts = rng.integers(0, samples.size - L + 1, size=N)
    meta = {"system": source.meta.get("system", "record"), "seed": seed,
            "mode": "windowed"}
    return [TimeSeries(samples[s:s + L].copy(), dt=source.dt,
                       meta={**meta, "index": i, "start": int(s)})
            for i, s in enumerate(starts)]


# ---------------------------------------------------------------------------
# Serialization: one realization per CSV row, sidecar JSON with provenance
# ---------------------------------------------------------------------------

def save_realizations(path, realizations, extra_meta: dict | None = None) -> None:
    """Write realizations as a headerless CSV plus a .meta.json sidecar."""
    path = Path(path)
    lengths = {len(r) for r in realizations}
    if len(lengths) != 1:
        raise LengthError(f"realizations have mixed lengths: {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for r in realizations:
            writer.writerow([f"{v:.17g}" for v in r.samples])
    meta = {
        "L": lengths.pop(),
        "N": len(realizations),
    }
    first = realizations[0]
    for key in ("system", "seed", "mode", "params"):
        if key in first.meta:
            meta[key] = first.meta[key]
    if first.dt is not None:
        meta["dt"] = first.dt
    if extra_meta:
        meta.update(extra_meta)
    with open(meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_realizations(path) -> tuple:
    """Read a realization CSV (and sidecar metadata when present)."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append(np.array([float(v) for v in row]))
    if not rows:
        raise LengthError(f"{path} contains no realizations")
    meta = {}
    sidecar = meta_path(path)
    if sidecar.exists():
        with open(sidecar) as fh:
            meta = json.load(fh)
    dt = meta.get("dt")
    series = [TimeSeries(r, dt=dt, meta={"index": i, **{k: meta[k] for k in
                                                        ("system", "seed", "mode")
                                                        if k in meta}})
              for i, r in enumerate(rows)]
    return series, meta


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")
