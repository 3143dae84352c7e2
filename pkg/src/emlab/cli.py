"""Command-line front end: config parsing, experiment dispatch, CSV output.

Usage::

    emlab <subcommand> [--config FILE] [--key value ...] --out PATH

Subcommands: ``roots`` (dispersion-root structure table and sanity checks),
``green-verify`` (randomized coefficient verification of the mode Green's
function), ``linear-decay`` (both linear decay experiments plus rate fits),
``nonlinear`` (torus run with energy monitoring), ``fit`` (re-fit a rate
from an existing CSV).

Config files are plain ``key = value`` lines (``#`` comments, blank lines,
and comma-separated pairs allowed); command-line ``--key value`` flags
override file entries.  Unknown keys are rejected by name.  Results go to
``--out`` as a ``t,channel,value`` CSV (rows sorted by channel then time,
floats with 17 significant digits, trailing newline, UTF-8) and the fully
resolved configuration is written alongside as ``<out>.config.json``.
Identical configurations produce byte-identical files.  Exit status: 0 if
every check requested by the subcommand passed, 1 if any failed or the run
errored, 2 for configuration errors.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import dispersion, green, harness
from .harness import TimeSeries, fit_decay
from .nonlinear import validate_weights

__all__ = ["RunConfig", "ConfigError", "parse_config", "emit_csv", "read_csv", "main"]

_SUBCOMMANDS = ("roots", "green-verify", "linear-decay", "nonlinear", "fit")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration (defaults applied)."""

    subcommand: str
    out: str
    n: int = 16
    box_scale: float = 1.0
    dealias: bool = True
    s: int = 4
    amplitude: float = 1e-2
    t_end: float = 20.0
    dt: float = 2.5e-3
    k1: float = 0.1
    k2: float = 0.01
    k3: float = 0.005
    seed: int = 0
    kmax: float = 12.0
    kmin: float = 1e-3
    count: int = 200
    samples: int = 1000
    record_stride: int | None = None
    channel: str | None = None
    model: str = "powerlaw"
    window_lo: float | None = None
    window_hi: float | None = None
    csv: str | None = None

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.k1, self.k2, self.k3)


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"key '{key}': expected a boolean, got {raw!r}")


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key '{key}': expected an integer, got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key '{key}': expected a number, got {raw!r}") from None


_KEY_PARSERS = {
    "n": _parse_int,
    "s": _parse_int,
    "seed": _parse_int,
    "count": _parse_int,
    "samples": _parse_int,
    "record_stride": _parse_int,
    "box_scale": _parse_float,
    "amplitude": _parse_float,
    "t_end": _parse_float,
    "dt": _parse_float,
    "k1": _parse_float,
    "k2": _parse_float,
    "k3": _parse_float,
    "kmax": _parse_float,
    "kmin": _parse_float,
    "window_lo": _parse_float,
    "window_hi": _parse_float,
    "dealias": _parse_bool,
    "channel": lambda key, raw: raw,
    "model": lambda key, raw: raw,
    "csv": lambda key, raw: raw,
    "out": lambda key, raw: raw,
}


def _parse_file(path: str) -> dict:
    values = {}
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"key 'config': cannot read {path!r} ({exc})") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for piece in line.split(","):
            piece = piece.strip()
            if not piece:
                continue
            if "=" not in piece:
                raise ConfigError(f"config line {lineno}: expected 'key = value', got {piece!r}")
            key, raw = (part.strip() for part in piece.split("=", 1))
            if key not in _KEY_PARSERS:
                raise ConfigError(f"unknown key '{key}' (config line {lineno})")
            values[key] = _KEY_PARSERS[key](key, raw)
    return values


def parse_config(argv, config_file: str | None = None) -> RunConfig:
    """Resolve subcommand + file + flags into a validated RunConfig."""
    argv = list(argv)
    if not argv:
        raise ConfigError(
            f"missing subcommand; expected one of {', '.join(_SUBCOMMANDS)}")
    subcommand, rest = argv[0], argv[1:]
    if subcommand in ("-h", "--help"):
        print(__doc__)
        raise SystemExit(0)
    if subcommand not in _SUBCOMMANDS:
        raise ConfigError(
            f"unknown subcommand {subcommand!r}; expected one of {', '.join(_SUBCOMMANDS)}")

    flags = {}
    i = 0
    while i < len(rest):
        arg = rest[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}; flags look like --key value")
        key = arg[2:].replace("-", "_")
        if i + 1 >= len(rest):
            raise ConfigError(f"key '{key}': missing value")
        raw = rest[i + 1]
        i += 2
        if key == "config":
            config_file = raw
            continue
        if key not in _KEY_PARSERS:
            raise ConfigError(f"unknown key '{key}'")
        flags[key] = _KEY_PARSERS[key](key, raw)

    values = _parse_file(config_file) if config_file else {}
    values.update(flags)  # flags win

    if "out" not in values:
        raise ConfigError("key 'out': required (--out PATH)")
    if subcommand == "roots" and "kmax" not in values:
        values["kmax"] = 1e3  # root-structure sweeps default to the wide range

    cfg = RunConfig(subcommand=subcommand, **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.n < 8 or (cfg.n & (cfg.n - 1)) != 0:
        raise ConfigError(f"key 'n': must be a power of two >= 8, got {cfg.n}")
    if cfg.s < 1:
        raise ConfigError(f"key 's': must be >= 1, got {cfg.s}")
    if cfg.amplitude < 0.0:
        raise ConfigError(f"key 'amplitude': must be >= 0, got {cfg.amplitude}")
    if cfg.t_end <= 0.0:
        raise ConfigError(f"key 't_end': must be > 0, got {cfg.t_end}")
    if cfg.dt <= 0.0:
        raise ConfigError(f"key 'dt': must be > 0, got {cfg.dt}")
    if cfg.box_scale <= 0.0:
        raise ConfigError(f"key 'box_scale': must be > 0, got {cfg.box_scale}")
    if cfg.kmax <= 0.0:
        raise ConfigError(f"key 'kmax': must be > 0, got {cfg.kmax}")
    if cfg.kmin <= 0.0 or cfg.kmin >= cfg.kmax:
        raise ConfigError(f"key 'kmin': must satisfy 0 < kmin < kmax, got {cfg.kmin}")
    if cfg.count < 2:
        raise ConfigError(f"key 'count': must be >= 2, got {cfg.count}")
    if cfg.samples < 1:
        raise ConfigError(f"key 'samples': must be >= 1, got {cfg.samples}")
    if cfg.record_stride is not None and cfg.record_stride < 1:
        raise ConfigError(f"key 'record_stride': must be >= 1, got {cfg.record_stride}")
    if cfg.model not in ("powerlaw", "exponential"):
        raise ConfigError(f"key 'model': must be 'powerlaw' or 'exponential', got {cfg.model!r}")
    if cfg.window_lo is not None and cfg.window_hi is not None and cfg.window_lo >= cfg.window_hi:
        raise ConfigError(f"key 'window_lo': must be < window_hi, got {cfg.window_lo}")
    try:
        validate_weights(cfg.weights)
    except ValueError as exc:
        raise ConfigError(f"keys 'k1'/'k2'/'k3': {exc}") from None


# --------------------------------------------------------------------------
# CSV emission
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class _RawSeries:
    """Sign-carrying table rows (roots, fit results) for CSV emission.

    harness.TimeSeries insists on nonnegative values because it carries
    norms; root/slope tables are signed, so they bypass that invariant.
    """

    label: str
    times: np.ndarray
    values: np.ndarray


def emit_csv(series, path: str) -> None:
    """Write series as `t,channel,value` rows sorted by (channel, t)."""
    rows = []
    for ts in series:
        rows.extend((ts.label, float(t), float(v)) for t, v in zip(ts.times, ts.values))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,channel,value\n")
        for label, t, v in rows:
            fh.write(f"{_fmt(t)},{label},{_fmt(v)}\n")


def read_csv(path: str) -> dict:
    """Inverse of :func:`emit_csv`: channel name -> series (bit-exact).

    Returns raw sign-carrying rows; callers that need the TimeSeries
    invariants (nonnegative norm values) construct them explicitly.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if header != "t,channel,value":
            raise ValueError(f"{path}: expected header 't,channel,value', got {header!r}")
        data: dict[str, list[tuple[float, float]]] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                t_str, label, v_str = line.split(",")
                t, v = float(t_str), float(v_str)
            except ValueError:
                raise ValueError(f"{path} line {lineno}: malformed row {line!r}") from None
            data.setdefault(label, []).append((t, v))
    out = {}
    for label, pairs in data.items():
        pairs.sort()
        out[label] = _RawSeries(
            label, np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
        )
    return out


def _write_config_json(cfg: RunConfig) -> None:
    payload = dataclasses.asdict(cfg)
    with open(cfg.out + ".config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# subcommands: each returns (series, checks)
# --------------------------------------------------------------------------


def _run_roots(cfg: RunConfig):
    ks = np.geomspace(cfg.kmin, cfg.kmax, cfg.count)
    triples = [dispersion.root_triple(k) for k in ks]
    sig = np.array([tr.sigma for tr in triples])
    bet = np.array([tr.beta for tr in triples])
    om = np.array([tr.omega for tr in triples])
    resid = np.array([abs(dispersion.charpoly(k, s)) for k, s in zip(ks, sig)])

    checks = [
        ("sigma_in_bracket", bool(np.all((sig > -0.5) & (sig < 0.0))), f"range [{sig.min():.6g}, {sig.max():.6g}]"),
        ("beta_in_bracket", bool(np.all((bet > -1.0) & (bet < -0.75))), f"range [{bet.min():.6g}, {bet.max():.6g}]"),
        ("sigma_strictly_decreasing", bool(np.all(np.diff(sig) < 0.0)), f"max diff {np.diff(sig).max():.3g}"),
        ("residuals_small", bool(np.all(resid < 1e-12 * np.maximum(1.0, ks**2))),
         f"max scaled residual {np.max(resid / np.maximum(1.0, ks**2)):.3g}"),
    ]
    small = ks <= 0.05
    if np.any(small):
        dev = np.abs(sig[small] / ks[small] ** 2 + 1.0)
        checks.append(("small_k_asymptote", bool(np.all(dev <= 0.02)), f"max |sigma/k^2 + 1| = {dev.max():.3g}"))
    large = ks >= 100.0
    if np.any(large):
        dev = np.abs((sig[large] + 0.5) * 16.0 * ks[large] ** 2 - 1.0)
        checks.append(("large_k_asymptote", bool(np.all(dev <= 0.02)),
                       f"max |(sigma+1/2)*16k^2 - 1| = {dev.max():.3g}"))

    series = [
        _RawSeries("sigma", ks, sig),
        _RawSeries("beta", ks, bet),
        _RawSeries("omega", ks, om),
        _RawSeries("residual", ks, resid),
    ]
    return series, checks


def _run_green_verify(cfg: RunConfig):
    rng = np.random.default_rng(cfg.seed)
    rec_err = np.empty(cfg.samples)
    ode_err = np.empty(cfg.samples)
    disagreements = np.empty(cfg.samples)
    for j in range(cfg.samples):
        kmag = 10.0 ** rng.uniform(-3.0, 3.0)
        raw = rng.normal(size=6)
        vec = (raw[:3] + 1j * raw[3:]).astype(complex)
        vec /= np.linalg.norm(vec)
        ic = green.SumModeIC(rho0=vec[0], ulong0=vec[1], theta0=vec[2])
        coeffs = green.sum_mode_coefficients(kmag, ic)
        rec = max(abs(coeffs.c[0] + coeffs.c[1] - ic.rho0),
                  abs(coeffs.c[3] + coeffs.c[4] - ic.theta0),
                  abs(coeffs.c[6] + coeffs.c[7] - ic.ulong0))
        rec_err[j] = rec
        raw = max(green.sum_mode_ode_residual(kmag, ic, t) for t in (0.0, 0.5, 2.0))
        ode_err[j] = raw / (1.0 + kmag**3)  # residual scaled by its derivative-cascade bound
        comparison = green.coefficient_matrix_comparison(kmag)
        disagreements[j] = sum(int((~a).sum()) for a in comparison.agrees.values())
    # entry-level report of where the hand-simplified matrices deviate from
    # the direct solve (informational: deviations are reported, not asserted)
    sample = green.coefficient_matrix_comparison(1.0)
    parts = []
    for channel in sample.channels:
        bad = np.argwhere(~sample.agrees[channel])
        if bad.size:
            cells = ",".join(f"({i + 1},{j + 1})" for i, j in bad)
            parts.append(f"{channel} {cells}")
    total_bad = int(disagreements.max())
    print(
        f"tabulated-matrix disagreements vs direct solve: {total_bad} of 27 "
        f"entries, stable across sampled k [1-indexed]: " + "; ".join(parts)
    )
    checks = [
        ("reconstruction_1e-13", bool(np.all(rec_err < 1e-13)), f"max {rec_err.max():.3g}"),
        ("ode_residual_scaled_1e-9", bool(np.all(ode_err < 1e-9)), f"max {ode_err.max():.3g}"),
    ]
    idx = np.arange(cfg.samples, dtype=float)
    series = [
        TimeSeries("reconstruction_error", idx, rec_err),
        TimeSeries("ode_residual_scaled", idx, ode_err),
        TimeSeries("closed_form_disagreements", idx, disagreements),
    ]
    return series, checks


# channel -> (model, target slope, tolerance, two_sided, window)
_DECAY_CHECKS = {
    "rho2_L2": ("powerlaw", -0.75, 0.05, True, None),
    "u2_L2": ("powerlaw", -1.25, 0.05, True, None),
    "grad_rho2_L2": ("powerlaw", -1.25, 0.05, True, None),
    "grad_u2_L2": ("powerlaw", -1.75, 0.05, True, None),
    # The temperature channel decays FASTER than its documented bound (its
    # slow-branch eigenvector component is O(k^2)); the honest check is
    # one-sided: at least as fast as the bound.
    "theta2_L2": ("powerlaw", -0.75, 0.05, False, None),
    "grad_theta2_L2": ("powerlaw", -1.25, 0.05, False, None),
    "B_L2": ("powerlaw", -0.75, 0.05, True, None),
    "E_L2": ("powerlaw", -1.25, 0.05, True, None),
    "u1_L2": ("powerlaw", -1.25, 0.05, True, None),
    "B_L1hat": ("powerlaw", -1.5, 0.1, True, harness.L1HAT_WINDOW),
    "rho1_theta1_L2": ("exponential", -0.5, 0.02, False, None),
}


def _run_linear_decay(cfg: RunConfig):
    series = harness.run_linear_sum_decay(cfg) + harness.run_linear_diff_decay(cfg)
    by_label = {ts.label: ts for ts in series}
    checks = []
    for label, (model, target, tol, two_sided, window) in _DECAY_CHECKS.items():
        fit = fit_decay(by_label[label], window=window, model=model)
        if two_sided:
            ok = abs(fit.slope - target) <= tol
            detail = f"slope {fit.slope:+.4f} vs {target:+.2f} +/- {tol:g}"
        else:
            ok = fit.slope <= target + tol
            detail = f"slope {fit.slope:+.4f} <= {target + tol:+.2f} (bound)"
        checks.append((f"{label}_rate", bool(ok), detail))
    return series, checks


def _run_nonlinear(cfg: RunConfig):
    run = harness.run_nonlinear(cfg)
    e_s = np.array([r.e_s for r in run.reports])
    e_s_h = np.array([r.e_s_h for r in run.reports])
    gauss = max(r.gauss_residual for r in run.reports)
    sol = max(r.solenoid_residual for r in run.reports)
    slack = 1e-8 * max(e_s.max(), 1e-300)
    slack_h = 1e-8 * max(e_s_h.max(), 1e-300)
    checks = [
        ("E_s_nonincreasing", bool(np.all(np.diff(e_s) <= slack)),
         f"max increase {np.diff(e_s).max() if e_s.size > 1 else 0.0:.3g}"),
        ("E_s_h_nonincreasing", bool(np.all(np.diff(e_s_h) <= slack_h)),
         f"max increase {np.diff(e_s_h).max() if e_s_h.size > 1 else 0.0:.3g}"),
        ("constraints_preserved", bool(gauss < 1e-9 and sol < 1e-9),
         f"max gauss {gauss:.3g}, max solenoid {sol:.3g}"),
    ]
    return run.series, checks


def _run_fit(cfg: RunConfig):
    if cfg.csv is None:
        raise ConfigError("key 'csv': required for the fit subcommand")
    if cfg.channel is None:
        raise ConfigError("key 'channel': required for the fit subcommand")
    table = read_csv(cfg.csv)
    if cfg.channel not in table:
        raise ValueError(
            f"channel {cfg.channel!r} not in {cfg.csv} (has: {', '.join(sorted(table))})")
    window = None
    if cfg.window_lo is not None or cfg.window_hi is not None:
        default = harness.POWER_WINDOW if cfg.model == "powerlaw" else harness.EXP_WINDOW
        window = (cfg.window_lo if cfg.window_lo is not None else default[0],
                  cfg.window_hi if cfg.window_hi is not None else default[1])
    fit = fit_decay(table[cfg.channel], window=window, model=cfg.model)
    print(f"{cfg.channel}: {fit.model} slope {fit.slope:+.6f} +/- {fit.stderr:.2g} "
          f"over t in [{fit.window[0]:g}, {fit.window[1]:g}] ({fit.n_samples} samples)")
    series = [
        _RawSeries(f"{cfg.channel}_slope", np.array([0.0]), np.array([fit.slope])),
        _RawSeries(f"{cfg.channel}_stderr", np.array([0.0]), np.array([fit.stderr])),
    ]
    return series, []


_RUNNERS = {
    "roots": _run_roots,
    "green-verify": _run_green_verify,
    "linear-decay": _run_linear_decay,
    "nonlinear": _run_nonlinear,
    "fit": _run_fit,
}


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        series, checks = _RUNNERS[cfg.subcommand](cfg)
        emit_csv(series, cfg.out)
        _write_config_json(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # honest failure: report and signal via exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    failed = 0
    for name, ok, detail in checks:
        print(f"CHECK {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        failed += 0 if ok else 1
    if checks:
        print(f"{len(checks) - failed}/{len(checks)} checks passed; results in {cfg.out}")
    return 0 if failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
