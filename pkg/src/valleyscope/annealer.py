"""Annealer backends producing SampleSets for an IsingProblem.

``solve_sa`` is the local reference backend. ``remote_solve`` speaks a small
JSON-over-HTTP protocol; ``mock_service`` serves that protocol backed by
``solve_sa``, so a remote call with the same seed reproduces the local result.

Wire protocol (hardware sign convention, E = +sum J s s + sum h s)::

    POST /v1/solve  {"h": {"<qubit>": float}, "J": {"<i>,<j>": float},
                     "num_reads": int, "seed": int,
                     "schedule": {"beta_start": float, "beta_end": float, "sweeps": int}}
      200 -> {"reads": [{"spins": [+-1, ...], "energy": float, "num": int}],
              "qubits": [int, ...], "schedule": {...}, "seed": int}
      400 -> {"error": str}
    GET /v1/health -> {"ok": true}

``spins`` are ordered like ``qubits`` (ascending qubit label). Energies are
identical in both conventions because h and J flip sign together.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import _kernels as K
from .chimera import IsingProblem, hardware_convention

log = logging.getLogger(__name__)

ENDPOINT_ENV = "VALLEYSCOPE_ENDPOINT"
DEFAULT_QUBIT_LIMIT = 4096
ENERGY_CHECK_TOL = 1e-9


class ProtocolError(RuntimeError):
    """Malformed or inconsistent response from a remote annealer."""


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnnealSchedule:
    beta_start: float = 0.1
    beta_end: float = 10.0
    sweeps: int = 1000

    def betas(self) -> np.ndarray:
        if self.sweeps < 1:
            raise ValueError("schedule needs at least one sweep")
        return np.geomspace(self.beta_start, self.beta_end, self.sweeps)

    def to_dict(self):
        return {"beta_start": self.beta_start, "beta_end": self.beta_end, "sweeps": self.sweeps}


@dataclass
class AnnealRead:
    spins: np.ndarray
    energy: float
    multiplicity: int = 1


@dataclass
class SampleSet:
    reads: list
    num_reads: int
    backend: str
    seed: int | None = None
    schedule: dict = field(default_factory=dict)

    def __post_init__(self):
        self.reads = sorted(self.reads, key=lambda r: r.energy)
        if sum(r.multiplicity for r in self.reads) != self.num_reads:
            raise ValueError("read multiplicities do not sum to num_reads")

    def spins(self) -> np.ndarray:
        return np.array([r.spins for r in self.reads], dtype=np.int8)

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.reads])

    def lowest(self) -> AnnealRead:
        return self.reads[0]

    def verify(self, problem: IsingProblem, tol=ENERGY_CHECK_TOL):
        if not self.reads:
            return
        e = problem.energy(self.spins())
        bad = np.abs(e - self.energies()) > tol
        if np.any(bad):
            raise ProtocolError(f"{int(bad.sum())} reads carry energies inconsistent with their spins")

    def to_dict(self):
        return {
            "reads": [{"spins": r.spins.tolist(), "energy": r.energy, "num": r.multiplicity} for r in self.reads],
            "num_reads": self.num_reads,
            "backend": self.backend,
            "seed": self.seed,
            "schedule": self.schedule,
        }

    @classmethod
    def from_dict(cls, doc):
        reads = [AnnealRead(np.array(r["spins"], dtype=np.int8), float(r["energy"]), int(r["num"])) for r in doc["reads"]]
        return cls(reads, int(doc["num_reads"]), doc["backend"], doc.get("seed"), doc.get("schedule", {}))


def _read_seeds(seed, num_reads):
    ss = np.random.SeedSequence(seed)
    raw = ss.generate_state(num_reads, dtype=np.uint64)
    return np.array([K.splitmix64(int(x)) for x in raw], dtype=np.uint64)


def solve_sa(problem: IsingProblem, num_reads=1000, schedule: AnnealSchedule | None = None, seed=0) -> SampleSet:
    """Independent simulated-annealing reads over a geometric beta ladder.

    `seed` may be an int or a numpy Generator (an int is drawn from it).
    """
    if num_reads < 1:
        raise ValueError("num_reads must be >= 1")
    if problem.num_qubits == 0:
        raise ValueError("empty problem")
    schedule = schedule or AnnealSchedule()
    if isinstance(seed, np.random.Generator):
        seed = K.draw_seed(seed)
    seed = int(seed)
    indptr, indices, weights = problem.csr()
    out = np.empty((num_reads, problem.num_qubits), dtype=np.int8)
    K.ising_anneal(problem.h, indptr, indices, weights, schedule.betas(), _read_seeds(seed, num_reads), out)
    energies = problem.energy(out)
    reads = [AnnealRead(out[r], float(energies[r]), 1) for r in range(num_reads)]
    return SampleSet(reads, num_reads, "local-sa", seed, schedule.to_dict())


def dedupe(sample: SampleSet) -> list:
    """Distinct spin vectors with summed multiplicity, energy-sorted (first-seen order on ties)."""
    seen = {}
    for r in sample.reads:
        key = r.spins.tobytes()
        if key in seen:
            seen[key].multiplicity += r.multiplicity
        else:
            seen[key] = AnnealRead(r.spins.copy(), r.energy, r.multiplicity)
    return sorted(seen.values(), key=lambda r: r.energy)


# ---------------------------------------------------------------------------
# wire protocol


def encode_request(problem: IsingProblem, num_reads, seed, schedule: AnnealSchedule | None = None) -> dict:
    hw = hardware_convention(problem)
    doc = hw.to_dict()
    doc.pop("meta")
    doc["num_reads"] = int(num_reads)
    doc["seed"] = int(seed)
    if schedule is not None:
        doc["schedule"] = schedule.to_dict()
    return doc


def decode_request(doc) -> tuple:
    for key in ("h", "J", "num_reads", "seed"):
        if key not in doc:
            raise ValueError(f"missing field {key!r}")
    hw = IsingProblem.from_dict({"h": doc["h"], "J": doc["J"]})
    problem = hardware_convention(hw)
    sched = AnnealSchedule(**doc["schedule"]) if doc.get("schedule") else AnnealSchedule()
    return problem, int(doc["num_reads"]), int(doc["seed"]), sched


def encode_response(sample: SampleSet, problem: IsingProblem) -> dict:
    return {
        "reads": [{"spins": r.spins.tolist(), "energy": r.energy, "num": r.multiplicity} for r in sample.reads],
        "qubits": problem.qubits.tolist(),
        "schedule": sample.schedule,
        "seed": sample.seed,
    }


def decode_response(doc, problem: IsingProblem, num_reads, backend, seed) -> SampleSet:
    try:
        raw = doc["reads"]
        if doc.get("qubits", problem.qubits.tolist()) != problem.qubits.tolist():
            raise ProtocolError("response qubit order does not match the problem")
        reads = []
        for r in raw:
            spins = np.array(r["spins"], dtype=np.int64)
            if spins.shape != (problem.num_qubits,) or not np.all(np.abs(spins) == 1):
                raise ProtocolError("read spins have the wrong shape or values")
            num = int(r["num"])
            if num < 1:
                raise ProtocolError("read multiplicity must be positive")
            reads.append(AnnealRead(spins.astype(np.int8), float(r["energy"]), num))
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed response: {exc}") from exc
    if sum(r.multiplicity for r in reads) != num_reads:
        raise ProtocolError("read multiplicities do not add up to num_reads")
    sample = SampleSet(reads, num_reads, backend, seed, doc.get("schedule", {}))
    sample.verify(problem, tol=1e-6)
    return sample


def remote_solve(endpoint, problem: IsingProblem, num_reads=1000, timeout=60.0, seed=0,
                 schedule: AnnealSchedule | None = None, retries=3) -> SampleSet:
    """Solve on a remote annealer speaking the JSON protocol. Retries transport failures."""
    if num_reads < 1:
        raise ValueError("num_reads must be >= 1")
    endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise ValueError(f"no endpoint given and {ENDPOINT_ENV} unset")
    if isinstance(seed, np.random.Generator):
        seed = K.draw_seed(seed)
    body = json.dumps(encode_request(problem, num_reads, seed, schedule)).encode()
    url = endpoint.rstrip("/") + "/v1/solve"
    last = None
    for attempt in range(retries):
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                payload = resp.read()
            break
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode(errors="replace")
            raise ProtocolError(f"server rejected request ({exc.code}): {detail}") from exc
        except (urllib.error.URLError, ConnectionError, TimeoutError) as exc:
            last = exc
            log.warning("transport failure on attempt %d/%d: %s", attempt + 1, retries, exc)
            time.sleep(0.05 * (attempt + 1))
    else:
        raise TransportError(f"giving up on {url} after {retries} attempts: {last}")
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not JSON: {exc}") from exc
    return decode_response(doc, problem, num_reads, f"remote:{endpoint}", seed)


class _Handler(BaseHTTPRequestHandler):
    server_version = "valleyscope-mock/0.1"

    def log_message(self, fmt, *args):
        log.debug(fmt, *args)

    def _send(self, code, doc):
        data = json.dumps(doc).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send(200, {"ok": True})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/v1/solve":
            self._send(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            doc = json.loads(self.rfile.read(length))
            if "seed" not in doc:
                doc["seed"] = self.server.default_seed
            problem, num_reads, seed, sched = decode_request(doc)
            if problem.num_qubits > self.server.qubit_limit:
                raise ValueError(f"problem has {problem.num_qubits} qubits, limit is {self.server.qubit_limit}")
            if num_reads < 1:
                raise ValueError("num_reads must be >= 1")
            sample = solve_sa(problem, num_reads, sched, seed)
        except (ValueError, KeyError, TypeError) as exc:
            self._send(400, {"error": str(exc)})
            return
        self._send(200, encode_response(sample, problem))


class MockService:
    """Handle on a running mock annealer; use as a context manager or call close()."""

    def __init__(self, host="127.0.0.1", port=0, seed=0, qubit_limit=DEFAULT_QUBIT_LIMIT):
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.default_seed = seed
        self.httpd.qubit_limit = qubit_limit
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self.thread.start()
        return self

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def mock_service(address="127.0.0.1:0", seed=0, qubit_limit=DEFAULT_QUBIT_LIMIT) -> MockService:
    host, _, port = address.rpartition(":")
    return MockService(host or "127.0.0.1", int(port or 0), seed, qubit_limit).start()


# ---------------------------------------------------------------------------
# backend selection


class LocalSA:
    name = "local-sa"

    def __init__(self, schedule: AnnealSchedule | None = None):
        self.schedule = schedule or AnnealSchedule()

    def sample(self, problem, num_reads, seed):
        return solve_sa(problem, num_reads, self.schedule, seed)


class RemoteAnnealer:
    def __init__(self, endpoint=None, schedule: AnnealSchedule | None = None, timeout=600.0):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ValueError(f"remote backend needs a URL or {ENDPOINT_ENV}")
        self.schedule = schedule
        self.timeout = timeout
        self.name = f"remote:{self.endpoint}"

    def sample(self, problem, num_reads, seed):
        return remote_solve(self.endpoint, problem, num_reads, self.timeout, seed, self.schedule)


def make_annealer(spec: str, schedule: AnnealSchedule | None = None):
    """Parse a backend spec: 'local-sa' or 'remote:<url>' ('remote' alone reads the env var)."""
    if spec == "local-sa":
        return LocalSA(schedule)
    if spec == "remote" or spec.startswith("remote:"):
        url = spec.partition(":")[2] or None
        return RemoteAnnealer(os.environ.get(ENDPOINT_ENV) or url, schedule)
    raise ValueError(f"unknown annealer backend {spec!r}")
