"""Run configuration, manifests and on-disk artifact formats.

One JSON document per run configuration. Tables are row-oriented CSV with a
header row; spin snapshots are packed +-1 int8 arrays with a JSON index
sidecar; checkpoints are npz archives. The manifest records the config echo,
per-sample matrix seeds and a checksum inventory of every emitted file, which
is what `analyze` trusts.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .seeding import split_seed

ARTIFACT_VERSION = "0.1.0"
SPACINGS = ("geometric", "linear")
LAMBDA_MODES = ("bunched-subset", "explicit")


class ConfigError(ValueError):
    """Rejected run configuration; message says which field and why."""


@dataclass(frozen=True)
class TemperatureGrid:
    t_min: float
    t_max: float
    count: int
    spacing: str = "geometric"

    def values(self) -> tuple:
        if self.count == 1:
            return (float(self.t_min),)
        if self.spacing == "geometric":
            pts = np.geomspace(self.t_min, self.t_max, self.count)
        else:
            pts = np.linspace(self.t_min, self.t_max, self.count)
        return tuple(float(t) for t in pts)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; see validate_config for the field rules."""

    M: int
    n_photons: int
    alpha: float | list | None
    lambda_mode: str = "bunched-subset"
    explicit_lambda: tuple | None = None  # tuple of mode-index tuples
    temperatures: TemperatureGrid = TemperatureGrid(0.05, 0.6, 12)
    n_therm: int = 200_000
    n_measure: int = 200_000
    exchange_interval: int = 200
    n_replicas: int = 36
    n_samples: int = 20
    master_seed: int = 0
    output_dir: str = "runs/out"
    P: int | None = None  # alternative to alpha
    snapshot_stride: int | None = None  # None -> exchange_interval

    def alphas(self) -> tuple:
        """Resolved storage-ratio list (scalar configs give length 1)."""
        if self.alpha is None:
            return (self.P / self.M**self.n_photons,)
        if isinstance(self.alpha, (list, tuple)):
            return tuple(float(a) for a in self.alpha)
        return (float(self.alpha),)

    def channel_count(self, alpha: float) -> int:
        if self.P is not None and self.alpha is None:
            return int(self.P)
        return max(1, round(alpha * self.M**self.n_photons))

    def stride(self) -> int:
        return self.exchange_interval if self.snapshot_stride is None else self.snapshot_stride


def validate_config(cfg: RunConfig) -> RunConfig:
    """Return cfg if valid, else raise ConfigError naming the first problem."""
    def bad(msg):
        raise ConfigError(msg)

    if cfg.M < 1:
        bad(f"M must be >= 1, got {cfg.M}")
    if cfg.n_photons < 1:
        bad(f"n_photons must be >= 1, got {cfg.n_photons}")
    if (cfg.alpha is None) == (cfg.P is None):
        bad("exactly one of alpha and P must be set")
    if cfg.lambda_mode not in LAMBDA_MODES:
        bad(f"lambda_mode must be one of {LAMBDA_MODES}, got {cfg.lambda_mode!r}")
    if cfg.lambda_mode == "explicit" and not cfg.explicit_lambda:
        bad("lambda_mode 'explicit' needs a non-empty explicit_lambda list")
    if cfg.lambda_mode == "bunched-subset" and cfg.explicit_lambda:
        bad("explicit_lambda given but lambda_mode is 'bunched-subset'")
    for a in cfg.alphas():
        if not 0.0 < a < 1.0:
            bad(f"alpha must lie in (0, 1), got {a}")
        P = cfg.channel_count(a)
        if cfg.lambda_mode == "bunched-subset" and P > cfg.M:
            bad(f"alpha={a} gives P={P} bunched channels but only M={cfg.M} modes exist")
    t = cfg.temperatures
    if t.count < 1:
        bad(f"temperature count must be >= 1, got {t.count}")
    if t.t_min <= 0:
        bad(f"temperatures must be positive, got min {t.t_min}")
    if t.count > 1 and t.t_max <= t.t_min:
        bad(f"temperature max must exceed min, got [{t.t_min}, {t.t_max}]")
    if t.spacing not in SPACINGS:
        bad(f"temperature spacing must be one of {SPACINGS}, got {t.spacing!r}")
    if cfg.n_therm < 0:
        bad(f"n_therm must be >= 0, got {cfg.n_therm}")
    if cfg.n_measure < 0:
        bad(f"n_measure must be >= 0, got {cfg.n_measure}")
    for name in ("exchange_interval", "n_replicas", "n_samples"):
        v = getattr(cfg, name)
        if v < 1:
            bad(f"{name} must be >= 1, got {v}")
    if cfg.snapshot_stride is not None and cfg.snapshot_stride < 1:
        bad(f"snapshot_stride must be >= 1, got {cfg.snapshot_stride}")
    if not 0 <= cfg.master_seed < 2**64:
        bad(f"master_seed must be a 64-bit unsigned int, got {cfg.master_seed}")
    if not cfg.output_dir:
        bad("output_dir must be non-empty")
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["temperatures"] = dataclasses.asdict(cfg.temperatures)
    if cfg.explicit_lambda is not None:
        d["explicit_lambda"] = [list(c) for c in cfg.explicit_lambda]
    return d


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    t = d.get("temperatures")
    if isinstance(t, dict):
        tkeys = {f.name for f in dataclasses.fields(TemperatureGrid)}
        extra = set(t) - tkeys
        if extra:
            raise ConfigError(f"unknown temperature fields: {sorted(extra)}")
        d["temperatures"] = TemperatureGrid(**t)
    if d.get("explicit_lambda") is not None:
        d["explicit_lambda"] = tuple(tuple(int(m) for m in c) for c in d["explicit_lambda"])
    if isinstance(d.get("alpha"), list):
        d["alpha"] = [float(a) for a in d["alpha"]]
    try:
        cfg = RunConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate_config(cfg)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return config_from_dict(doc)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- tables and binary snapshots ----------------------------------------


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-tripping decimal
    if isinstance(v, (int, np.integer)):
        return int(v)
    return v


def read_csv(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"empty CSV {path}")
    return rows[0], rows[1:]


def save_spins(path: str, spins: np.ndarray, meta: dict | None = None) -> None:
    """Pack a +-1 int8 array as raw little-endian bytes plus a JSON sidecar."""
    spins = np.asarray(spins, dtype=np.int8)
    if spins.size and not np.all(np.abs(spins) == 1):
        raise ValueError("spin snapshots must be +-1")
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(spins).tobytes())
    sidecar = {
        "dtype": "int8",
        "shape": list(spins.shape),
        "order": "C",
        "encoding": "spins +-1",
    }
    if meta:
        sidecar.update(meta)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_spins(path: str) -> tuple:
    """Read a packed spin array; returns (array, sidecar dict)."""
    with open(path + ".json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("dtype") != "int8":
        raise ValueError(f"unsupported spin dtype {sidecar.get('dtype')!r}")
    raw = np.fromfile(path, dtype=np.int8)
    shape = tuple(sidecar["shape"])
    expected = int(np.prod(shape)) if shape else 0
    if raw.size != expected:
        raise ValueError(f"{path}: {raw.size} bytes, sidecar says {expected}")
    return raw.reshape(shape), sidecar


# -- checkpoints ---------------------------------------------------------


def save_checkpoint(path: str, snap: dict) -> None:
    """Persist an EMC snapshot_state() dict; arrays in npz, RNG states as JSON."""
    arrays = {k: snap[k] for k in
              ("sigma", "fields", "pr", "step_counts", "pr_buf", "spin_buf")}
    scalars = {
        "steps_done": snap["steps_done"],
        "sweep_count": snap["sweep_count"],
        "rng_states": snap["rng_states"],
        "exchange_rng_states": snap["exchange_rng_states"],
    }
    buf = io.BytesIO()
    np.savez_compressed(buf, meta=np.frombuffer(
        json.dumps(scalars).encode(), dtype=np.uint8), **arrays)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)  # atomic: never leaves a torn checkpoint


def load_checkpoint(path: str) -> dict:
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        snap = {k: z[k] for k in ("sigma", "fields", "pr", "step_counts", "pr_buf", "spin_buf")}
    snap["steps_done"] = int(meta["steps_done"])
    snap["sweep_count"] = int(meta["sweep_count"])
    snap["rng_states"] = meta["rng_states"]
    snap["exchange_rng_states"] = meta["exchange_rng_states"]
    return snap


# -- manifest ------------------------------------------------------------


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


class Manifest:
    """Inventory of one run: config echo, seeds, timestamps, file checksums.

    The numeric content of a run is fully determined by the config echo;
    timestamps are the only non-reproducible entries.
    """

    def __init__(self, doc: dict):
        self.doc = doc

    @classmethod
    def create(cls, cfg: RunConfig) -> "Manifest":
        return cls({
            "artifact_version": ARTIFACT_VERSION,
            "config": config_to_dict(cfg),
            "matrix_seeds": [split_seed(cfg.master_seed, "matrix", s)
                             for s in range(cfg.n_samples)],
            "lambda_seeds": [split_seed(cfg.master_seed, "lambda", s)
                             for s in range(cfg.n_samples)],
            "started_at": _utcnow(),
            "finished_at": None,
            "files": {},
        })

    @property
    def config(self) -> RunConfig:
        return config_from_dict(self.doc["config"])

    def declare(self, root: str, relpath: str) -> None:
        full = os.path.join(root, relpath)
        self.doc["files"][relpath] = {
            "sha256": sha256_file(full),
            "bytes": os.path.getsize(full),
        }

    def verify(self, root: str, relpath: str) -> None:
        """Raise if relpath is undeclared or its checksum changed."""
        entry = self.doc["files"].get(relpath)
        if entry is None:
            raise ValueError(f"{relpath} is not declared in the manifest")
        actual = sha256_file(os.path.join(root, relpath))
        if actual != entry["sha256"]:
            raise ValueError(f"{relpath} checksum mismatch: manifest {entry['sha256'][:12]}..., "
                             f"file {actual[:12]}...")

    def finish(self) -> None:
        self.doc["finished_at"] = _utcnow()

    def save(self, root: str) -> None:
        with open(os.path.join(root, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(self.doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, root: str) -> "Manifest":
        path = os.path.join(root, "manifest.json")
        if not os.path.exists(path):
            raise FileNotFoundError(f"no manifest.json under {root}")
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))
