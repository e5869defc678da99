"""Domain types, randomness streams, candidate sets and experiment persistence."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "TrialRecord",
    "ExperimentLog",
    "CandidateSet",
    "RngStream",
    "ExperimentConfig",
    "build_candidate_set",
    "load_housing_pool",
    "log_append",
    "as_generator",
    "STRATEGIES",
    "FAMILIES",
]

FAMILIES = ("mlr", "iohmm", "mglm")
_ARRAY_KEYS = ("w0", "alpha", "true_weights", "true_mix", "true_trans")
STRATEGIES = ("random", "infomax-gibbs", "infomax-vi", "infomax-glm-mismatch")


class RngStream:
    """Reproducible random stream identified by ``(seed, stream)``.

    Distinct stream ids give statistically independent generators (they are
    mapped onto ``numpy.random.SeedSequence`` spawn keys). The stream keeps
    its own position, so two streams built from the same pair replay the
    same draws.
    """

    def __init__(self, seed: int, stream: int | Sequence[int] = 0):
        self.seed = int(seed)
        if isinstance(stream, (int, np.integer)):
            stream = (int(stream),)
        self.stream = tuple(int(s) for s in stream)
        if any(s < 0 for s in self.stream) or self.seed < 0:
            raise ValueError("seed and stream ids must be non-negative")
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.stream))
        )

    def child(self, *ids: int) -> "RngStream":
        """Independent sub-stream, e.g. one per chain or replication."""
        return RngStream(self.seed, self.stream + tuple(ids))

    def kernel_seed(self) -> int:
        """Draw a seed for compiled kernels that own their generator state."""
        return int(self.generator.integers(0, 2**31 - 1))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"

    # thin pass-throughs used throughout the package
    def __getattr__(self, name):
        return getattr(self.generator, name)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, an int seed or None."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    if isinstance(rng, np.random.Generator):
        return RngStream(int(rng.integers(0, 2**62)))
    raise TypeError(f"cannot build a random stream from {type(rng).__name__}")


@dataclass(frozen=True)
class TrialRecord:
    t: int
    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=np.float64)))
        object.__setattr__(self, "y", float(self.y))
        if self.t < 1:
            raise ValueError("trial indices are 1-based")


class ExperimentLog:
    """Append-only record of the (input, output) pairs collected so far.

    Stored column-wise: ``X`` has shape (T, D) and ``y`` shape (T,).
    """

    def __init__(self, D: int, X=None, y=None, meta: dict | None = None, binary: bool = False):
        self.D = int(D)
        if self.D < 1:
            raise ValueError("D must be >= 1")
        self.X = np.empty((0, self.D)) if X is None else np.array(X, dtype=np.float64).reshape(-1, self.D)
        self.y = np.empty(0) if y is None else np.array(y, dtype=np.float64).ravel()
        if len(self.X) != len(self.y):
            raise ValueError("X and y lengths differ")
        self.binary = bool(binary)
        if self.binary and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("binary log contains outputs other than 0/1")
        self.meta = dict(meta or {})
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def T(self) -> int:
        return len(self.y)

    def __iter__(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield TrialRecord(i + 1, self.X[i], self.y[i])

    @property
    def trials(self) -> list[TrialRecord]:
        return list(self)

    def append(self, rec: TrialRecord) -> "ExperimentLog":
        return log_append(self, rec)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExperimentLog):
            return NotImplemented
        return (
            self.D == other.D
            and self.binary == other.binary
            and self.meta == other.meta
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def save(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            if self.binary:
                fh.write("# binary=1\n")
            w = csv.writer(fh)
            w.writerow(["t", "y"] + [f"x{d}" for d in range(self.D)])
            for i in range(len(self)):
                w.writerow([i + 1, _fmt(self.y[i])] + [_fmt(v) for v in self.X[i]])

    @classmethod
    def load(cls, path) -> "ExperimentLog":
        meta: dict = {}
        binary = False
        rows = []
        header = None
        with Path(path).open() as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    if key == "binary":
                        binary = val == "1"
                    else:
                        meta[key] = val
                    continue
                if header is None:
                    header = line.split(",")
                    continue
                rows.append(line.split(","))
        if header is None or header[:2] != ["t", "y"]:
            raise ValueError(f"{path}: expected header t,y,x0,...")
        D = len(header) - 2
        log = cls(D, meta=meta, binary=binary)
        if not rows:
            return log
        arr = np.array([[float(v) for v in r] for r in rows])
        if arr.shape[1] != D + 2:
            raise ValueError(f"{path}: malformed row width")
        t = arr[:, 0].astype(int)
        if not np.array_equal(t, np.arange(1, len(t) + 1)):
            raise ValueError(f"{path}: trial indices must be contiguous from 1")
        return cls(D, arr[:, 2:], arr[:, 1], meta=meta, binary=binary)


def log_append(log: ExperimentLog, rec: TrialRecord) -> ExperimentLog:
    """Return a new log with ``rec`` appended; ``rec.t`` must be ``len(log) + 1``."""
    if rec.t != len(log) + 1:
        raise ValueError(f"trial index {rec.t} does not follow {len(log)}")
    if rec.x.shape != (log.D,):
        raise ValueError(f"input has length {rec.x.size}, expected {log.D}")
    if log.binary and rec.y not in (0.0, 1.0):
        raise ValueError("binary outputs must be exactly 0 or 1")
    return ExperimentLog(
        log.D,
        np.vstack([log.X, rec.x[None, :]]),
        np.append(log.y, rec.y),
        meta=log.meta,
        binary=log.binary,
    )


@dataclass(frozen=True)
class CandidateSet:
    """Finite ordered set of inputs; in pool mode each input carries an output."""

    inputs: np.ndarray
    mode: str = "grid"
    outputs: np.ndarray | None = None
    consumed: np.ndarray | None = None
    kind: str = ""  # circle | sphere | line | pool, used for histogram buckets

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if len(X) == 0:
            raise ValueError("candidate set is empty")
        X.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        if self.mode not in ("grid", "pool"):
            raise ValueError(f"unknown candidate mode {self.mode!r}")
        if self.mode == "pool":
            if self.outputs is None or len(self.outputs) != len(X):
                raise ValueError("pool mode needs one output per input")
            out = np.asarray(self.outputs, dtype=np.float64)
            out.setflags(write=False)
            object.__setattr__(self, "outputs", out)
            used = np.zeros(len(X), bool) if self.consumed is None else np.asarray(self.consumed, bool).copy()
            used.setflags(write=False)
            object.__setattr__(self, "consumed", used)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def D(self) -> int:
        return self.inputs.shape[1]

    def available(self) -> np.ndarray:
        """Indices that may still be selected."""
        if self.mode == "grid":
            return np.arange(len(self))
        return np.flatnonzero(~self.consumed)

    def consume(self, idx: int) -> "CandidateSet":
        if self.mode != "pool":
            return self
        if self.consumed[idx]:
            raise ValueError(f"pool element {idx} already revealed")
        used = self.consumed.copy()
        used[idx] = True
        return dataclasses.replace(self, consumed=used)

    def save(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            if self.mode == "pool":
                w.writerow(["y"] + [f"x{d}" for d in range(self.D)])
                for yv, row in zip(self.outputs, self.inputs):
                    w.writerow([_fmt(yv)] + [_fmt(v) for v in row])
            else:
                w.writerow([f"x{d}" for d in range(self.D)])
                for row in self.inputs:
                    w.writerow([_fmt(v) for v in row])

    @classmethod
    def load(cls, path, kind: str = "") -> "CandidateSet":
        path = Path(path)
        text = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not text:
            raise ValueError(f"{path}: empty file")
        header = text[0].split(",")
        pool = header[0] == "y"
        try:
            arr = np.array([[float(v) for v in ln.split(",")] for ln in text[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: malformed row ({exc})") from None
        if arr.size == 0:
            raise ValueError(f"{path}: no data rows")
        if arr.ndim != 2 or arr.shape[1] != len(header):
            raise ValueError(f"{path}: malformed rows (expected {len(header)} columns)")
        if pool:
            return cls(arr[:, 1:], mode="pool", outputs=arr[:, 0], kind=kind or "pool")
        return cls(arr, mode="grid", kind=kind or "file")


HOUSING_ROWS = 5000
_TARGET_NAMES = ("medhouseval", "target", "y", "median_house_value")


def load_housing_pool(path, n_rows: int = HOUSING_ROWS, seed: int = 0) -> CandidateSet:
    """Pool from a CSV of predictors plus a target column.

    The target is the column named MedHouseVal/target/y (case-insensitive),
    else the last column. ``n_rows`` rows are drawn without replacement with
    a fixed seed, every predictor is standardized on that subset and an
    intercept column is appended.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    names = [h.lower() for h in header]
    tcol = next((names.index(t) for t in _TARGET_NAMES if t in names), len(header) - 1)
    y = data[:, tcol]
    X = np.delete(data, tcol, axis=1)
    if n_rows < len(y):
        idx = np.sort(RngStream(seed, stream=11).generator.choice(len(y), size=n_rows, replace=False))
        X, y = X[idx], y[idx]
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    X = (X - X.mean(axis=0)) / sd
    X = np.column_stack([X, np.ones(len(X))])
    return CandidateSet(X, mode="pool", outputs=y, kind="pool")


def _fmt(v: float) -> str:
    return repr(float(v))


def build_candidate_set(spec: str) -> CandidateSet:
    """Build the candidate inputs described by ``spec``.

    Accepted forms::

        circle:STEP_DEG              unit vectors at 0, STEP, ... degrees
        sphere:N:D:SEED              N uniform draws on the unit sphere in R^D
        line:LO:HI:STEP              scalars LO, LO+STEP, ..., HI
        pool:PATH                    CSV with header y,x0,...
        housing:PATH[:N[:SEED]]      raw predictors + target CSV, see load_housing_pool
    """
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "circle":
            step = float(args[0]) if args else 10.0
            if step <= 0:
                raise ValueError("non-positive step")
            n = int(round(360.0 / step))
            if not math.isclose(n * step, 360.0, rel_tol=1e-9):
                raise ValueError("circle step must divide 360 degrees")
            ang = np.deg2rad(np.arange(n) * step)
            return CandidateSet(np.column_stack([np.cos(ang), np.sin(ang)]), kind="circle")
        if kind == "sphere":
            n, D, seed = int(args[0]), int(args[1]), int(args[2])
            if n < 1 or D < 1:
                raise ValueError("sphere needs n >= 1 and D >= 1")
            g = RngStream(seed, stream=7).generator
            X = g.standard_normal((n, D))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            return CandidateSet(X, kind="sphere")
        if kind == "line":
            lo, hi, step = (float(a) for a in args[:3])
            if step <= 0:
                raise ValueError("non-positive step")
            n = int(round((hi - lo) / step)) + 1
            if n < 1:
                raise ValueError("empty line grid")
            # integer multiples keep the endpoints exact
            return CandidateSet(np.round(lo + step * np.arange(n), 12)[:, None], kind="line")
        if kind == "pool":
            return CandidateSet.load(rest, kind="pool")
        if kind == "housing":
            path = args[0]
            n = int(args[1]) if len(args) > 1 else HOUSING_ROWS
            seed = int(args[2]) if len(args) > 2 else 0
            return load_housing_pool(path, n, seed)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad candidate spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown candidate spec {spec!r}")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one closed-loop experiment.

    Persisted as a flat ``key = value`` text file; vectors are comma
    separated and matrices use ``;`` between rows. The keys are exactly the
    field names below.
    """

    family: str = "mlr"
    K: int = 2
    D: int = 2
    T: int = 200
    M: int = 500
    burn_in: int = 100
    n_chains: int = 1
    w0: np.ndarray | None = None
    sigma0_sq: float = 10.0
    alpha: np.ndarray | None = None
    noise_var: float = 0.1
    bias: bool = True
    strategy: str = "infomax-gibbs"
    candidates: str = "circle:10"
    metric_every: int = 1
    warmup: int = 10
    refit_every: int = 1
    vi_max_iter: int = 500
    vi_tol: float = 1e-6
    vi_samples: int = 10
    seed: int = 0
    true_weights: np.ndarray | None = None
    true_mix: np.ndarray | None = None
    true_trans: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def n_weights(self) -> int:
        """Length of each state's weight vector (bias column included for GLMs)."""
        return self.D + (1 if self.family != "mlr" and self.bias else 0)

    def prior_mean(self) -> np.ndarray:
        if self.w0 is None:
            return np.zeros(self.n_weights)
        w0 = np.broadcast_to(np.asarray(self.w0, dtype=np.float64), (self.n_weights,))
        return np.array(w0)

    def dirichlet_alpha(self) -> np.ndarray:
        """(K+1, K) matrix: row 0 for the initial/mixing distribution, rows 1..K for A."""
        if self.alpha is None:
            return np.ones((self.K + 1, self.K))
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.shape != (self.K + 1, self.K):
            raise ValueError(f"alpha must have shape ({self.K + 1}, {self.K})")
        return a

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        if self.K < 1 or self.D < 1:
            raise ValueError("K and D must be >= 1")
        if self.M < 1 or self.burn_in < 0 or self.T < 0:
            raise ValueError("need M >= 1, burn_in >= 0, T >= 0")
        if self.n_chains < 1:
            raise ValueError("chain count must be >= 1")
        if self.sigma0_sq <= 0 or self.noise_var <= 0:
            raise ValueError("variances must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.metric_every < 1 or self.refit_every < 1 or self.warmup < 0:
            raise ValueError("metric_every/refit_every >= 1 and warmup >= 0 required")
        if self.alpha is not None:
            a = self.dirichlet_alpha()
            if np.any(a <= 0):
                raise ValueError("Dirichlet alpha entries must be positive")
        if self.true_weights is not None:
            self.truth()

    def truth(self):
        """Generative parameter bundle described by the ``true_*`` fields, or None."""
        from .params import IoHmmParams, MglmParams, MlrParams

        if self.true_weights is None:
            return None
        W = np.atleast_2d(np.asarray(self.true_weights, dtype=np.float64))
        if W.shape != (self.K, self.n_weights):
            raise ValueError(f"true_weights must have shape ({self.K}, {self.n_weights})")
        mix = np.full(self.K, 1.0 / self.K) if self.true_mix is None else np.asarray(self.true_mix, dtype=np.float64)
        if self.family == "mlr":
            return MlrParams(W, mix, self.noise_var)
        if self.family == "mglm":
            return MglmParams(W, mix)
        if self.true_trans is None:
            raise ValueError("an IO-HMM truth needs true_trans")
        return IoHmmParams(W, np.atleast_2d(np.asarray(self.true_trans, dtype=np.float64)), mix)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, np.ndarray):
                if v.ndim == 2:
                    s = ";".join(",".join(_fmt(e) for e in row) for row in v)
                else:
                    s = ",".join(_fmt(e) for e in np.atleast_1d(v))
                    if v.size == 1:
                        s += ","
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, float):
                s = _fmt(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ValueError(f"line {n}: unknown or malformed entry {line!r}")
            val = val.strip()
            kind = types[key]
            if key in _ARRAY_KEYS:
                if ";" in val:
                    kwargs[key] = np.array([[float(v) for v in row.split(",")] for row in val.split(";")])
                else:
                    kwargs[key] = np.array([float(v) for v in val.split(",") if v.strip()])
            elif kind == "int":
                kwargs[key] = int(val)
            elif kind == "float":
                kwargs[key] = float(val)
            elif kind == "bool":
                if val.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(f"line {n}: expected a boolean for {key}")
                kwargs[key] = val.lower() in ("true", "1")
            else:
                kwargs[key] = val
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        for f in dataclasses.fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or not np.array_equal(np.asarray(a), np.asarray(b)):
                    return False
            elif a != b:
                return False
        return True

    def config_hash(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]
