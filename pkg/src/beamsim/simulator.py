"""Monte Carlo BER sweeps, slope and SNR-gap estimation, result files.

Trials are grouped in fixed-size batches. Batch ``b`` of every SNR point
draws from ``RngStream(seed, b)``, so all SNR points see the same channel,
payload and (unit-variance) noise realisations, and the outcome does not
depend on how many worker processes share the batches.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .channel import RngStream
from .constellation import qam
from .precoder import (
    build_partial,
    design_phi1,
    design_phi2,
    design_phi3,
    identity_precoder,
    load_precoder,
)
from .transceiver import SCHEMES, SchemeConfig, pmb_config, psb_config, run_trials, sb_config

__all__ = [
    "ConfigError",
    "InsufficientDataError",
    "SimulationConfig",
    "BerPoint",
    "BerCurve",
    "CRITERIA",
    "design_precoder",
    "build_scheme",
    "config_from_dict",
    "load_config",
    "run_ber_sweep",
    "estimate_slope",
    "compare_at_ber",
    "export_results",
    "load_results",
    "curve_to_csv",
]

log = logging.getLogger(__name__)

CRITERIA = ("phi1", "phi2", "phi3", "identity")
CSV_HEADER = ("snr_db", "bit_errors", "bits", "ber", "trials")
DEFAULT_BATCH = 4096


class ConfigError(ValueError):
    """Malformed configuration or result file."""


class InsufficientDataError(ValueError):
    """Not enough usable BER points for the requested estimate."""


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    scheme: SchemeConfig
    snr_grid_db: tuple[float, ...]
    seed: int = 0
    min_bit_errors: int = 200
    max_trials: int = 10_000_000
    output_path: Path | None = None
    batch_size: int = DEFAULT_BATCH
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = tuple(float(x) for x in self.snr_grid_db)
        object.__setattr__(self, "snr_grid_db", grid)
        if not grid:
            raise ValueError("empty SNR grid")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("SNR grid must be strictly increasing")
        if self.min_bit_errors < 1:
            raise ValueError("min_bit_errors must be at least 1")
        if self.max_trials < 1 or self.batch_size < 1:
            raise ValueError("max_trials and batch_size must be positive")


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    bit_errors: int
    bits: int
    trials: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits


@dataclass
class BerCurve:
    points: list[BerPoint]
    metadata: dict = field(default_factory=dict)

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    @classmethod
    def from_arrays(cls, snr_db, ber, bits: int = 10**9) -> BerCurve:
        """Synthetic curve with ``bit_errors = round(ber * bits)``."""
        pts = [BerPoint(float(s), int(round(b * bits)), bits, 0) for s, b in zip(snr_db, ber)]
        return cls(pts)


# -- scheme construction ------------------------------------------------------


@lru_cache(maxsize=32)
def design_precoder(criterion: str, s: int, qam_m: int, seed: int = 0):
    """Full ``s x s`` precoder for ``criterion``; cached because designs are deterministic."""
    c = qam(qam_m)
    if criterion == "phi1":
        return design_phi1(s, c, seed=seed)
    if criterion == "phi2":
        return design_phi2(s, c)
    if criterion == "phi3":
        return design_phi3(s, c)
    if criterion == "identity":
        return identity_precoder(s)
    raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")


_REQUIRED = ("scheme", "m_rx", "n_tx", "qam_m", "snr_db")


def _field(d: dict, name: str, kind, default=None, required: bool = False):
    if name not in d or d[name] is None:
        if required:
            raise ConfigError(f"missing required field '{name}'")
        return default
    val = d[name]
    try:
        if kind is int:
            if isinstance(val, bool) or float(val) != int(val):
                raise TypeError
            return int(val)
        if kind is float:
            return float(val)
        if kind is list:
            if not isinstance(val, list):
                raise TypeError
            return val
        if kind is str:
            if not isinstance(val, str):
                raise TypeError
            return val
    except (TypeError, ValueError):
        raise ConfigError(f"field '{name}' has invalid value {val!r}") from None
    return val


def build_scheme(d: dict, base_dir: Path | None = None) -> SchemeConfig:
    """Scheme from config-file fields; designs the precoder if no file is given."""
    scheme = _field(d, "scheme", str, required=True).upper()
    if scheme not in SCHEMES:
        raise ConfigError(f"field 'scheme' must be one of {SCHEMES}, got {scheme!r}")
    m_rx = _field(d, "m_rx", int, required=True)
    n_tx = _field(d, "n_tx", int, required=True)
    qam_m = _field(d, "qam_m", int, required=True)
    criterion = _field(d, "criterion", str, default="phi1")
    power = _field(d, "power", str, default="total")
    design_seed = _field(d, "design_seed", int, default=0)
    try:
        c = qam(qam_m)
        if scheme == "SB":
            return sb_config(m_rx, n_tx, c, power)
        if scheme == "PSB":
            return psb_config(m_rx, n_tx, c, _field(d, "r", int, required=True), power=power)
        s = _field(d, "s", int, required=True)
        pre = None
        path = _field(d, "precoder_path", str)
        if path is not None:
            p = Path(path)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            pre = load_precoder(p)
            if pre.s != s:
                raise ConfigError(f"precoder file has s={pre.s}, config has s={s}")
        if scheme == "FPMB":
            if pre is None:
                pre = design_precoder(criterion, s, qam_m, design_seed)
            return pmb_config(m_rx, n_tx, c, pre, power)
        b_p = _field(d, "b_p", list, required=True)
        r = _field(d, "r", int, default=len(b_p))
        if r != len(b_p):
            raise ConfigError(f"field 'r'={r} disagrees with len(b_p)={len(b_p)}")
        if pre is None:
            tt = design_precoder(criterion, r, qam_m, design_seed).theta
            pre = build_partial(tt, b_p, s)
        elif tuple(pre.b_p) != tuple(b_p):
            raise ConfigError("precoder file b_p disagrees with field 'b_p'")
        return pmb_config(m_rx, n_tx, c, pre, power)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(d: dict, base_dir: Path | None = None) -> SimulationConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    for name in _REQUIRED:
        _field(d, name, object, required=True)
    snr = _field(d, "snr_db", list, required=True)
    try:
        snr = [float(x) for x in snr]
    except (TypeError, ValueError):
        raise ConfigError("field 'snr_db' must be a list of numbers") from None
    out = _field(d, "output_path", str)
    if out is not None and base_dir is not None and not Path(out).is_absolute():
        out = base_dir / out
    try:
        return SimulationConfig(
            scheme=build_scheme(d, base_dir),
            snr_grid_db=tuple(snr),
            seed=_field(d, "seed", int, default=0),
            min_bit_errors=_field(d, "min_bit_errors", int, default=200),
            max_trials=_field(d, "max_trials", int, default=10_000_000),
            output_path=Path(out) if out is not None else None,
            batch_size=_field(d, "batch_size", int, default=DEFAULT_BATCH),
            description=dict(d),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(d, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# -- sweep --------------------------------------------------------------------

_WORKER_SCHEME: SchemeConfig | None = None


def _init_worker(scheme: SchemeConfig) -> None:
    global _WORKER_SCHEME
    _WORKER_SCHEME = scheme


def _worker_batch(args):
    snr, seed, stream_id, count = args
    return run_trials(_WORKER_SCHEME, snr, RngStream(seed, stream_id), count)


def _simulate_point(cfg: SimulationConfig, snr_db: float, pool, workers: int) -> BerPoint:
    snr = 10.0 ** (snr_db / 10.0)
    errors = bits = trials = 0
    batch = 0
    while errors < cfg.min_bit_errors and trials < cfg.max_trials:
        # A wave of up to `workers` batches; results are merged in batch order
        # and the wave is cut at the first batch meeting the stopping rule.
        jobs = []
        planned = trials
        for b in range(batch, batch + max(1, workers)):
            count = min(cfg.batch_size, cfg.max_trials - planned)
            if count <= 0:
                break
            jobs.append((snr, cfg.seed, b, count))
            planned += count
        if pool is None:
            results = (run_trials(cfg.scheme, *j[:1], RngStream(j[1], j[2]), j[3]) for j in jobs)
        else:
            results = pool.map(_worker_batch, jobs)
        for job, (e, nb) in zip(jobs, results):
            errors += e
            bits += nb
            trials += job[3]
            batch += 1
            if errors >= cfg.min_bit_errors or trials >= cfg.max_trials:
                break
    return BerPoint(snr_db=snr_db, bit_errors=errors, bits=bits, trials=trials)


def run_ber_sweep(cfg: SimulationConfig, workers: int = 1) -> BerCurve:
    """Simulate every SNR point until the stopping rule holds.

    If interrupted, the points finished so far are written to
    ``cfg.output_path`` (when set) before the interrupt propagates.
    """
    t0 = time.perf_counter()
    points: list[BerPoint] = []
    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(cfg.scheme,))
    try:
        for snr_db in cfg.snr_grid_db:
            pt = _simulate_point(cfg, snr_db, pool, workers)
            log.info("SNR %.2f dB: %d/%d bit errors, %d trials", snr_db, pt.bit_errors, pt.bits, pt.trials)
            points.append(pt)
    except KeyboardInterrupt:
        if cfg.output_path is not None and points:
            export_results(BerCurve(points, _metadata(cfg, time.perf_counter() - t0, partial=True)), cfg.output_path)
        raise
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    curve = BerCurve(points, _metadata(cfg, time.perf_counter() - t0))
    if cfg.output_path is not None:
        export_results(curve, cfg.output_path)
    return curve


def _metadata(cfg: SimulationConfig, wall: float, partial: bool = False) -> dict:
    sc = cfg.scheme
    meta = {
        "config": {k: v for k, v in cfg.description.items() if k != "output_path"},
        "scheme": sc.scheme,
        "m_rx": sc.m_rx,
        "n_tx": sc.n_tx,
        "streams": sc.s,
        "symbols": sc.n_symbols,
        "qam_m": sc.constellation.m,
        "bits_per_use": sc.bits_per_use,
        "power": sc.power,
        "mapping": [[[float(z.real), float(z.imag)] for z in row] for row in sc.mapping],
        "snr_db": list(cfg.snr_grid_db),
        "seed": cfg.seed,
        "min_bit_errors": cfg.min_bit_errors,
        "max_trials": cfg.max_trials,
        "batch_size": cfg.batch_size,
        "wall_time_s": round(wall, 3),
        "version": __version__,
    }
    if sc.precoder is not None:
        meta["b_p"] = list(sc.precoder.b_p)
        meta["criterion"] = sc.precoder.criterion
    if partial:
        meta["partial"] = True
    return meta


# -- curve analysis -------------------------------------------------------------


def estimate_slope(curve: BerCurve, window: tuple[float, float] | None = None, ber_range=None) -> float:
    """Negated least-squares slope of ``log10(ber)`` against ``log10(snr)``.

    ``window`` selects points by SNR in dB; ``ber_range`` selects by BER.
    With neither, the three highest-SNR points with BER in ``[1e-6, 1e-2]``
    are used. Points with zero errors are always ignored.
    """
    snr, ber = curve.snr_db, curve.ber
    ok = ber > 0
    if window is not None:
        lo, hi = window
        ok &= (snr >= lo) & (snr <= hi)
        idx = np.flatnonzero(ok)
    elif ber_range is not None:
        lo, hi = ber_range
        idx = np.flatnonzero(ok & (ber >= lo) & (ber <= hi))
    else:
        idx = np.flatnonzero(ok & (ber >= 1e-6) & (ber <= 1e-2))[-3:]
    if idx.size < 2:
        raise InsufficientDataError(f"need at least 2 points with positive BER, have {idx.size}")
    slope = np.polyfit(snr[idx] / 10.0, np.log10(ber[idx]), 1)[0]
    return float(-slope)


def _snr_at(curve: BerCurve, target: float) -> float:
    snr, ber = curve.snr_db, curve.ber
    keep = ber > 0
    snr, lb = snr[keep], np.log10(ber[keep])
    lt = math.log10(target)
    for i in range(len(snr)):
        if lb[i] == lt:
            return float(snr[i])
        if i + 1 < len(snr) and (lb[i] - lt) * (lb[i + 1] - lt) < 0:
            frac = (lt - lb[i]) / (lb[i + 1] - lb[i])
            return float(snr[i] + frac * (snr[i + 1] - snr[i]))
    raise InsufficientDataError(f"curve does not cross BER {target:g}")


def compare_at_ber(curve_a: BerCurve, curve_b: BerCurve, target_ber: float) -> float:
    """SNR of ``curve_a`` minus SNR of ``curve_b`` at ``target_ber`` (dB).

    Each crossing is interpolated linearly in (dB, log10 BER). Positive
    values mean ``curve_b`` needs less SNR.
    """
    return _snr_at(curve_a, target_ber) - _snr_at(curve_b, target_ber)


# -- persistence ----------------------------------------------------------------


def curve_to_csv(curve: BerCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in curve.points:
        w.writerow([repr(float(p.snr_db)), p.bit_errors, p.bits, repr(float(p.ber)), p.trials])
    return buf.getvalue()


def _json_path(path: Path) -> Path:
    return path.with_suffix(".json") if path.suffix != ".json" else path.with_name(path.stem + ".meta.json")


def export_results(curve: BerCurve, path) -> None:
    """Write ``path`` (CSV) and a companion ``.json`` holding points and metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(curve_to_csv(curve))
    doc = {
        "metadata": curve.metadata,
        "points": [
            {"snr_db": p.snr_db, "bit_errors": p.bit_errors, "bits": p.bits, "ber": p.ber, "trials": p.trials}
            for p in curve.points
        ],
    }
    _json_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_csv(text: str, source: str) -> list[BerPoint]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ConfigError(f"{source}:1: expected header {','.join(CSV_HEADER)}")
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise ConfigError(f"{source}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            snr, errs, bits, _, trials = float(row[0]), int(row[1]), int(row[2]), float(row[3]), int(row[4])
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: malformed number in {row}") from None
        if bits <= 0:
            raise ConfigError(f"{source}:{lineno}: field 'bits' must be positive")
        pts.append(BerPoint(snr, errs, bits, trials))
    return pts


def load_results(path) -> BerCurve:
    """Read a CSV written by :func:`export_results`, with its metadata if present."""
    path = Path(path)
    pts = _parse_csv(path.read_text(), str(path))
    meta = {}
    jp = _json_path(path)
    if jp.exists():
        try:
            meta = json.loads(jp.read_text()).get("metadata", {})
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{jp}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return BerCurve(pts, meta)
