"""Command line front end: ``oppq scan | minima | bound | cache``.

Settings come from an optional YAML file (``--config``) overridden by flags.
Every number is read as a decimal string and converted at the working
precision, so no binary float ever enters a computation.

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 precision
failure (rerun with more digits), 4 numerical failure (no minimum, cap,
collision, coverage).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from . import __version__
from .bounds import (
    MinimaRecord,
    bracket_bounds,
    choose_cap,
    minima_sequence,
)
from .cache import Cache, cached_basis, decode_real, default_cache_dir, encode_real
from .cdr import Evaluator, values_by_order
from .errors import CoverageError, InvalidParameter, NumericalError, PrecisionError
from .precision import fmt, log10_abs, real, working_precision
from .problems import problem_by_name
from .weights import last_index, missing_order

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_PRECISION = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("oppqbm")


class ConfigError(InvalidParameter):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------- parsing

def parse_list(text: str) -> list:
    """``"6-14,20"`` or ``"10-100:10"`` into a sorted list of integers."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        step = 1
        if ":" in part:
            part, s = part.split(":", 1)
            step = int(s)
            if step < 1:
                raise ConfigError(f"bad step in {text!r}")
        if "-" in part:
            a, b = part.split("-", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ConfigError(f"descending range {part!r}")
            out.extend(range(a, b + 1, step))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError(f"empty list {text!r}")
    return out


def parse_window(text: str) -> tuple:
    parts = str(text).split(":")
    if len(parts) != 2 or not all(p.strip() for p in parts):
        raise ConfigError(f"window must be LO:HI, got {text!r}")
    lo, hi = parts[0].strip(), parts[1].strip()
    for v in (lo, hi):
        try:
            float(v)
        except ValueError:
            raise ConfigError(f"window bound {v!r} is not a number") from None
    return lo, hi


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


@dataclass
class RunConfig:
    """Run settings; numeric fields stay decimal strings until use."""

    problem: str = "harmonic"
    params: dict = field(default_factory=dict)
    digits: int = 60
    orders: str | None = None
    ms: str | None = None
    windows: list = field(default_factory=list)
    state: int = 0
    grid_points: int = 200
    track_points: int = 16
    scan_points: int = 200
    refine_tol: str = "1e-12"
    cap: str | None = None
    cap_margin: str | None = None
    derivative: bool = False
    out: str | None = None
    cache_dir: str | None = None
    use_cache: bool = True

    # ------------------------------------------------------------ derived
    def order_list(self) -> list:
        if self.orders and self.ms:
            raise ConfigError("give either orders or ms, not both")
        if self.ms:
            orders = [last_index(m) for m in parse_list(self.ms)]
        elif self.orders:
            orders = parse_list(self.orders)
        else:
            raise ConfigError("no order schedule (orders or ms)")
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise ConfigError("order schedule must be strictly increasing")
        if orders[0] < 0:
            raise ConfigError("orders must be non-negative")
        return orders

    def window_list(self) -> list:
        if not self.windows:
            raise ConfigError("no energy window")
        out = []
        for w in self.windows:
            lo, hi = parse_window(w) if isinstance(w, str) else w
            if not float(hi) > float(lo):
                raise ConfigError(f"empty window {lo}:{hi}")
            out.append((lo, hi))
        return out

    def validate(self, command: str) -> None:
        if self.digits < 30:
            raise ConfigError("digits must be at least 30")
        if command in ("scan", "minima", "bound"):
            self.order_list()
            self.window_list()
            problem_by_name(self.problem, **self.params)
        if self.cap is not None and self.cap_margin is not None:
            raise ConfigError("give either cap or cap_margin, not both")
        for name in ("grid_points", "track_points", "scan_points"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be at least 2")
        for name in ("refine_tol", "cap", "cap_margin"):
            v = getattr(self, name)
            if v is not None:
                try:
                    if not float(v) > 0:
                        raise ValueError
                except ValueError:
                    raise ConfigError(f"{name} must be a positive number, got {v!r}") from None

    def snapshot(self) -> dict:
        """Settings that determine the results (paths excluded)."""
        d = {}
        for f in fields(self):
            if f.name in ("out", "cache_dir", "use_cache"):
                continue
            v = getattr(self, f.name)
            d[f.name] = [list(w) if isinstance(w, tuple) else w for w in v] if f.name == "windows" else v
        return d

    def fingerprint(self, command: str) -> str:
        blob = json.dumps({"command": command, "config": self.snapshot(), "version": __version__}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


_INT_KEYS = {"digits", "state", "grid_points", "track_points", "scan_points"}
_STR_KEYS = {"problem", "orders", "ms", "refine_tol", "cap", "cap_margin", "out", "cache_dir"}


def load_config(path) -> dict:
    """Read a YAML config; every scalar arrives as a string."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.load(fh, Loader=yaml.BaseLoader)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


def build_config(args) -> RunConfig:
    raw = load_config(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)} | {"window"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        for k, v in raw.items():
            if k in _INT_KEYS:
                setattr(cfg, k, int(v))
            elif k in _STR_KEYS:
                setattr(cfg, k, str(v))
            elif k == "params":
                if not isinstance(v, dict):
                    raise ConfigError("params must be a mapping")
                cfg.params = {str(a): str(b) for a, b in v.items()}
            elif k == "window":
                cfg.windows = [str(v)]
            elif k == "windows":
                if not isinstance(v, list):
                    raise ConfigError("windows must be a list")
                cfg.windows = [str(w) for w in v]
            elif k in ("derivative", "use_cache"):
                setattr(cfg, k, _as_bool(v))
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from None

    # flag overrides
    for name in ("problem", "orders", "ms", "refine_tol", "out", "cache_dir"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    for name in ("digits", "state", "grid_points", "track_points", "scan_points"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "param", None):
        for item in args.param:
            if "=" not in item:
                raise ConfigError(f"--param needs k=v, got {item!r}")
            k, v = item.split("=", 1)
            cfg.params[k.strip()] = v.strip()
    if getattr(args, "window", None):
        cfg.windows = list(args.window)
    if getattr(args, "cap", None) is not None:
        cfg.cap, cfg.cap_margin = args.cap, None
    if getattr(args, "cap_margin", None) is not None:
        cfg.cap_margin, cfg.cap = args.cap_margin, None
    if getattr(args, "derivative", False):
        cfg.derivative = True
    if getattr(args, "no_cache", False):
        cfg.use_cache = False
    return cfg


# ---------------------------------------------------------------- output

def write_csv(rows: list, header: list, out) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[h] for h in header])
    text = buf.getvalue()
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def _sidecar(out, suffix: str) -> Path | None:
    if not out:
        return None
    p = Path(out)
    return p.with_name(p.stem + suffix)


def write_record(record: dict, timings: dict, out) -> None:
    rec_path = _sidecar(out, ".json")
    if rec_path is None:
        return
    with open(rec_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(record, sort_keys=True, indent=2) + "\n")
    with open(_sidecar(out, ".timing.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(timings, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------- orchestration

class Session:
    """Shared state of one command: problem, precision, cache, diagnostics."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.problem = problem_by_name(cfg.problem, **cfg.params)
        self.cache = Cache(cfg.cache_dir or default_cache_dir()) if cfg.use_cache else None
        self.loss = {}
        self.timings = {}
        self.fingerprint = cfg.fingerprint(command)

    def evaluator(self, order: int) -> Evaluator:
        basis = cached_basis(self.cache, self.problem.weight, order + 1)
        ev = Evaluator(self.problem, order, basis=basis)
        return ev

    def m_s(self, order: int) -> int:
        if self.problem.dim == 1:
            return self.problem.missing_moment_order
        return missing_order(order)

    # checkpoints ------------------------------------------------------
    def _ckpt_key(self, what: str, state: int) -> dict:
        return {"run": self.fingerprint, "what": what, "state": state}

    def load_checkpoint(self, what: str, state: int):
        if self.cache is None:
            return None
        return self.cache.get("checkpoint", self._ckpt_key(what, state))

    def save_checkpoint(self, what: str, state: int, payload: dict) -> None:
        if self.cache is not None:
            self.cache.put("checkpoint", self._ckpt_key(what, state), payload)


def _enc_min(r: MinimaRecord) -> dict:
    return {"order": r.order, "energy": encode_real(r.energy), "value": encode_real(r.value), "kind": r.kind,
            "edge": r.edge, "flags": list(r.flags), "bits": r.energy.precision}


def _dec_min(d: dict, window, state: int) -> MinimaRecord:
    b = d["bits"]
    return MinimaRecord(d["order"], decode_real(d["energy"], b), decode_real(d["value"], b), d["kind"],
                        (real(window[0]), real(window[1])), d["edge"], state, tuple(d["flags"]))


def run_sequence(sess: Session, window, state_index: int) -> list:
    """Minima sequence for one window, resumed from and saved to checkpoints."""
    cfg = sess.cfg
    orders = cfg.order_list()
    saved = sess.load_checkpoint("minima", state_index) or {"records": [], "loss": {}}
    done = [_dec_min(d, window, cfg.state) for d in saved["records"] if d["order"] in orders]
    done = done[: len([o for o in orders if o in {r.order for r in done}])]
    sess.loss.update({int(k): v for k, v in saved["loss"].items()})
    remaining = orders[len(done):]
    if done and [r.order for r in done] != orders[: len(done)]:
        done, remaining = [], orders
    records = list(done)
    delta = records[-1].energy - records[-2].energy if len(records) >= 2 else None
    evaluators = {}

    def factory(order):
        t = time.perf_counter()
        ev = sess.evaluator(order)
        evaluators[order] = (ev, t)
        return ev

    def on_record(rec):
        ev, t = evaluators[rec.order]
        sess.loss[rec.order] = round(ev.loss_digits or 0.0, 3)
        sess.timings[f"minima[{state_index}].{rec.order}"] = round(time.perf_counter() - t, 3)
        records.append(rec)
        sess.save_checkpoint("minima", state_index, {
            "records": [_enc_min(r) for r in records],
            "loss": {str(k): v for k, v in sorted(sess.loss.items())},
        })
        log.info("order %d: %s = %s value %s", rec.order, sess.problem.energy_param, fmt(rec.energy, 20),
                 fmt(rec.value, 12))

    if remaining:
        minima_sequence(factory, window, remaining, state=cfg.state, grid_points=cfg.grid_points,
                        track_points=cfg.track_points, refine_tol=cfg.refine_tol, derivative=cfg.derivative,
                        on_record=on_record, previous=records[-1] if records else None, delta=delta)
    return records


def cmd_scan(cfg: RunConfig):
    sess = Session(cfg, "scan")
    orders = cfg.order_list()
    rows = []
    digits = cfg.digits
    for lo, hi in cfg.window_list():
        lo, hi = real(lo), real(hi)
        n = cfg.scan_points
        step = (hi - lo) / n
        cached_basis(sess.cache, sess.problem.weight, orders[-1] + 1)
        grid = [lo + k * step for k in range(n + 1)]
        values = {}
        for E in grid:
            values[E] = values_by_order(sess.problem, E, orders)
        for I in orders:
            for E in grid:
                v = values[E][I]
                rows.append({"E": fmt(E, digits), "I": I, "value": fmt(v, digits),
                             "log10_value": f"{log10_abs(v):.15f}" if v > 0 else "nan"})
    header = ["E", "I", "value", "log10_value"]
    write_csv(rows, header, cfg.out)
    record = {"software": {"name": "oppqbm", "version": __version__}, "command": "scan",
              "config": cfg.snapshot(), "rows": rows}
    write_record(record, sess.timings, cfg.out)
    return record


def _min_rows(sess: Session, state_index: int, window, records) -> list:
    digits = sess.cfg.digits
    label = sess.problem.energy_param
    return [{"state": state_index, "window": f"{window[0]}:{window[1]}", "order": r.order, "m_s": sess.m_s(r.order),
             label: fmt(r.energy, digits), "value": fmt(r.value, digits), "kind": r.kind,
             "flags": "|".join(r.flags)} for r in records]


def cmd_minima(cfg: RunConfig):
    sess = Session(cfg, "minima")
    rows = []
    for k, window in enumerate(cfg.window_list()):
        rows.extend(_min_rows(sess, k, window, run_sequence(sess, window, k)))
    header = ["state", "window", "order", "m_s", sess.problem.energy_param, "value", "kind", "flags"]
    write_csv(rows, header, cfg.out)
    record = {"software": {"name": "oppqbm", "version": __version__}, "command": "minima",
              "config": cfg.snapshot(), "rows": rows,
              "diagnostics": {"loss_digits": {str(k): v for k, v in sorted(sess.loss.items())}}}
    write_record(record, sess.timings, cfg.out)
    return record


def cmd_bound(cfg: RunConfig):
    sess = Session(cfg, "bound")
    digits = cfg.digits
    label = sess.problem.energy_param
    rows = []
    caps = {}
    for k, window in enumerate(cfg.window_list()):
        seq = run_sequence(sess, window, k)
        if cfg.cap is not None:
            cap = choose_cap(seq, override=cfg.cap)
        else:
            cap = choose_cap(seq, margin=cfg.cap_margin)
        caps[k] = fmt(cap, digits)
        saved = sess.load_checkpoint("bounds", k) or {"cap": None, "rows": []}
        if saved["cap"] != encode_real(cap):
            saved = {"cap": encode_real(cap), "rows": []}
        have = {r["order"]: r for r in saved["rows"]}
        for r in seq:
            if r.order not in have:
                t = time.perf_counter()
                b = bracket_bounds(sess.evaluator(r.order), r, cap)
                sess.timings[f"bound[{k}].{r.order}"] = round(time.perf_counter() - t, 3)
                have[r.order] = {"order": r.order, "lower": encode_real(b.lower), "upper": encode_real(b.upper),
                                 "bits": b.lower.precision}
                saved["rows"] = [have[o] for o in sorted(have)]
                sess.save_checkpoint("bounds", k, saved)
            h = have[r.order]
            lower, upper = decode_real(h["lower"], h["bits"]), decode_real(h["upper"], h["bits"])
            rows.append({"state": k, "window": f"{window[0]}:{window[1]}", "order": r.order,
                         "m_s": sess.m_s(r.order), f"{label}_min": fmt(r.energy, digits),
                         "value": fmt(r.value, digits), "cap": fmt(cap, digits),
                         "lower": fmt(lower, digits), "upper": fmt(upper, digits)})
    header = ["state", "window", "order", "m_s", f"{label}_min", "value", "cap", "lower", "upper"]
    write_csv(rows, header, cfg.out)
    record = {"software": {"name": "oppqbm", "version": __version__}, "command": "bound",
              "config": cfg.snapshot(), "caps": caps, "rows": rows,
              "diagnostics": {"loss_digits": {str(k): v for k, v in sorted(sess.loss.items())}}}
    write_record(record, sess.timings, cfg.out)
    return record


def cmd_cache(cfg: RunConfig, action: str) -> dict:
    cache = Cache(cfg.cache_dir or default_cache_dir())
    if action == "status":
        report = cache.status()
    elif action == "clear":
        report = {"path": str(cache.path), "removed": cache.clear()}
    else:
        raise ConfigError(f"unknown cache action {action!r}")
    sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------- entry point

def _common(p: argparse.ArgumentParser, run: bool = True) -> None:
    p.add_argument("--config", metavar="PATH", help="YAML run configuration")
    p.add_argument("--cache-dir", dest="cache_dir", metavar="PATH",
                   help="cache directory (default: $OPPQ_CACHE_DIR or ~/.cache/oppqbm)")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    if not run:
        return
    p.add_argument("--digits", type=int, help="working precision in decimal digits (>= 30)")
    p.add_argument("--problem", help="harmonic | quartic | qzm")
    p.add_argument("--param", action="append", metavar="K=V", help="problem parameter, repeatable (qzm: B, eps0)")
    p.add_argument("--orders", metavar="LIST", help='orders, e.g. "6-14,20" or "10-100:10"')
    p.add_argument("--ms", metavar="LIST", help="missing-moment orders (2-D problems); sets orders to their last index")
    p.add_argument("--window", action="append", metavar="LO:HI",
                   help="energy window, repeatable (use --window=-4:-3 for negative bounds)")
    p.add_argument("--state", type=int, help="ordinal of the minimum within the window (default 0)")
    p.add_argument("--grid-points", dest="grid_points", type=int, help="grid points of the first search (default 200)")
    p.add_argument("--track-points", dest="track_points", type=int, help="grid points of tracked windows (default 16)")
    p.add_argument("--refine-tol", dest="refine_tol", help="relative minimum refinement tolerance (default 1e-12)")
    p.add_argument("--derivative", action="store_true", help="refine minima through the energy derivative")
    p.add_argument("--out", metavar="PATH", help="CSV output (record and timing JSON written alongside)")
    p.add_argument("--no-cache", dest="no_cache", action="store_true", help="do not read or write the cache")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oppq", description="Eigenenergy bounds from moment equations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    scan = sub.add_parser("scan", help="tabulate the functional over an energy grid")
    _common(scan)
    scan.add_argument("--points", dest="scan_points", type=int, help="grid intervals per window (default 200)")
    minima = sub.add_parser("minima", help="local minima per order")
    _common(minima)
    bound = sub.add_parser("bound", help="minima, cap and bracketing bounds per order")
    _common(bound)
    cap = bound.add_mutually_exclusive_group()
    cap.add_argument("--cap", help="explicit cap on the functional")
    cap.add_argument("--cap-margin", dest="cap_margin", help="relative margin above the last minimum (default 0.10)")
    cache = sub.add_parser("cache", help="inspect or clear the cache")
    _common(cache, run=False)
    cache.add_argument("action", choices=["status", "clear"])
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        cfg.validate(args.command)
        if args.command == "cache":
            cmd_cache(cfg, args.action)
            return 0
        with working_precision(cfg.digits):
            {"scan": cmd_scan, "minima": cmd_minima, "bound": cmd_bound}[args.command](cfg)
        return 0
    except InvalidParameter as exc:
        print(f"oppq: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PrecisionError as exc:
        print(f"oppq: precision exhausted: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except (NumericalError, CoverageError) as exc:
        print(f"oppq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"oppq: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
