"""On-disk cache for bases, coefficient tables and run checkpoints.

Each entry is one JSON file::

    {"format": "oppq-cache", "version": 1, "kind": ..., "key": {...},
     "payload": {...}, "checksum": sha256 of the canonical kind/key/payload}

High-precision numbers are stored exactly as ``"<mantissa>p<exponent>"``
strings together with their bit precision, so a round trip is bit-exact and
independent of the platform's byte order.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from pathlib import Path

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .mer import CoeffTable
from .precision import zeros
from .weights import BasisTable, WeightSpec

FORMAT = "oppq-cache"
VERSION = 1

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- scalars

def encode_real(x: mpfr) -> str:
    if gmpy2.is_zero(x):
        return "0p0"
    if not gmpy2.is_finite(x):
        raise ValueError(f"cannot cache non-finite value {x}")
    man, exp = x.as_mantissa_exp()
    return f"{int(man)}p{int(exp)}"


def decode_real(s: str, bits: int) -> mpfr:
    man, exp = s.split("p")
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        return gmpy2.mul_2exp(mpfr(gmpy2.mpz(man)), int(exp))


def encode_array(a) -> dict:
    a = np.asarray(a, dtype=object)
    return {"shape": list(a.shape), "data": [encode_real(v) for v in a.ravel()]}


def decode_array(d: dict, bits: int) -> np.ndarray:
    out = zeros(tuple(d["shape"]))
    flat = out.reshape(-1)
    for i, s in enumerate(d["data"]):
        flat[i] = decode_real(s, bits)
    return out


def _bits_of(values) -> int:
    for v in values:
        if isinstance(v, mpfr):
            return v.precision
    return gmpy2.get_context().precision


# ---------------------------------------------------------------- tables

def encode_coeff_table(t: CoeffTable) -> dict:
    def enc_map(m):
        return [[list(k) if isinstance(k, tuple) else k, [encode_real(v) for v in row]] for k, row in m.items()]

    return {
        "problem": t.problem,
        "dim": t.dim,
        "energy": encode_real(t.energy),
        "bits": t.energy.precision,
        "m_s": t.m_s,
        "max_index": t.max_index,
        "digits": t.digits,
        "m_values": enc_map(t.m_values),
        "dm_values": enc_map(t.dm_values) if t.dm_values is not None else None,
    }


def decode_coeff_table(d: dict) -> CoeffTable:
    bits = d["bits"]

    def dec_map(items):
        out = {}
        for k, row in items:
            key = tuple(k) if isinstance(k, list) else k
            arr = np.empty(len(row), dtype=object)
            for i, s in enumerate(row):
                arr[i] = decode_real(s, bits)
            out[key] = arr
        return out

    dm = dec_map(d["dm_values"]) if d["dm_values"] is not None else None
    return CoeffTable(d["problem"], d["dim"], decode_real(d["energy"], bits), d["m_s"], d["max_index"],
                      dec_map(d["m_values"]), dm, d["digits"])


def encode_basis(b: BasisTable) -> dict:
    bits = _bits_of(b.xi.ravel())
    return {
        "weight": {"kind": b.weight.kind, "params": [list(p) for p in b.weight.params]},
        "bits": bits,
        "digits": b.digits,
        "method": b.method,
        "loss": b.loss,
        "ordering": [list(o) if isinstance(o, tuple) else o for o in b.ordering],
        "xi": encode_array(b.xi),
        "gram": encode_array(b.gram) if b.gram is not None else None,
    }


def decode_basis(d: dict) -> BasisTable:
    bits = d["bits"]
    weight = WeightSpec(d["weight"]["kind"], tuple(tuple(p) for p in d["weight"]["params"]))
    ordering = [tuple(o) if isinstance(o, list) else o for o in d["ordering"]]
    gram = decode_array(d["gram"], bits) if d["gram"] is not None else None
    return BasisTable(weight, decode_array(d["xi"], bits), ordering, gram, d["digits"], d["method"], d["loss"])


# ---------------------------------------------------------------- store

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _checksum(kind, key, payload) -> str:
    return hashlib.sha256(_canonical({"kind": kind, "key": key, "payload": payload}).encode()).hexdigest()


def default_cache_dir() -> Path:
    env = os.environ.get("OPPQ_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "oppqbm"


class Cache:
    """Directory of checksummed JSON entries; corrupt entries are dropped."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else default_cache_dir()
        self._lock = threading.Lock()

    def _file(self, kind: str, key: dict) -> Path:
        digest = hashlib.sha256(_canonical({"kind": kind, "key": key}).encode()).hexdigest()[:32]
        return self.path / f"{kind}-{digest}.json"

    def _read(self, f: Path):
        """Parsed entry, or ``None`` (with the file removed) if it is corrupt."""
        try:
            entry = json.loads(f.read_text(encoding="utf-8"))
            ok = (
                entry.get("format") == FORMAT
                and entry.get("version") == VERSION
                and entry.get("checksum") == _checksum(entry["kind"], entry["key"], entry["payload"])
            )
        except (OSError, ValueError, KeyError, TypeError):
            ok = False
        if not ok:
            log.warning("dropping corrupt cache entry %s", f.name)
            try:
                f.unlink()
            except OSError:
                pass
            return None
        return entry

    def get(self, kind: str, key: dict):
        f = self._file(kind, key)
        with self._lock:
            if not f.exists():
                return None
            entry = self._read(f)
        if entry is None or entry["key"] != key:
            return None
        return entry["payload"]

    def put(self, kind: str, key: dict, payload: dict) -> Path:
        entry = {
            "format": FORMAT,
            "version": VERSION,
            "kind": kind,
            "key": key,
            "payload": payload,
            "checksum": _checksum(kind, key, payload),
        }
        f = self._file(kind, key)
        with self._lock:
            self.path.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.path, prefix=".tmp-", suffix=".json")
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(_canonical(entry))
            os.replace(tmp, f)
        return f

    def delete(self, kind: str, key: dict) -> None:
        f = self._file(kind, key)
        with self._lock:
            if f.exists():
                f.unlink()

    def entries(self):
        if not self.path.is_dir():
            return []
        return sorted(p for p in self.path.glob("*.json") if not p.name.startswith(".tmp-"))

    def status(self) -> dict:
        """Entry counts per kind after validating every checksum."""
        counts: dict = {}
        size = 0
        dropped = 0
        with self._lock:
            for f in self.entries():
                entry = self._read(f)
                if entry is None:
                    dropped += 1
                    continue
                counts[entry["kind"]] = counts.get(entry["kind"], 0) + 1
                size += f.stat().st_size
        return {"path": str(self.path), "entries": sum(counts.values()), "by_kind": dict(sorted(counts.items())),
                "bytes": size, "dropped": dropped}

    def clear(self) -> int:
        removed = 0
        with self._lock:
            for f in self.entries():
                f.unlink()
                removed += 1
        return removed


# ---------------------------------------------------------------- helpers

def basis_key(weight: WeightSpec, bits: int, method: str) -> dict:
    return {"weight": weight.key, "bits": bits, "method": method}


def cached_basis(cache: Cache | None, weight: WeightSpec, size: int, method: str = "auto") -> BasisTable:
    """Basis with at least ``size`` polynomials, from ``cache`` when possible."""
    from .cdr import shared_basis, seed_basis

    if cache is None:
        return shared_basis(weight, size, method)
    bits = gmpy2.get_context().precision
    key = basis_key(weight, bits, method)
    payload = cache.get("basis", key)
    if payload is not None:
        stored = decode_basis(payload)
        if stored.size >= size:
            seed_basis(stored, method)
            return shared_basis(weight, size, method)
    table = shared_basis(weight, size, method)
    cache.put("basis", key, encode_basis(table))
    return table
