"""Real-time track compliance: frame-size and lookahead caps plus a per-frame
timing harness for pluggable frame processors.

A processor is any callable ``processor(frame, future) -> out_frame`` where
``frame`` holds the current frame's samples and ``future`` at most the
declared lookahead. Past context is the processor's own state. The harness
hands over read-only copies, so a processor cannot see beyond its lookahead.
"""
from __future__ import annotations

import importlib
import math
import platform
import shlex
import struct
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .activity import frame_length
from .audio import AudioClip

MAX_FRAME_MS = 40.0
MAX_LOOKAHEAD_MS = 40.0
WARMUP_FRAMES = 10
MIN_TIMED_FRAMES = 100
POLICIES = ("mean", "p99", "max")

Processor = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class BackendDescriptor:
    frame_ms: float
    lookahead_ms: float
    processor: Processor
    name: str = "backend"

    def __post_init__(self):
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be positive")
        if self.lookahead_ms < 0:
            raise ValueError("lookahead_ms must be non-negative")


@dataclass
class StructuralVerdict:
    passed: bool
    reasons: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def check_structure(desc: BackendDescriptor) -> StructuralVerdict:
    reasons = []
    if desc.frame_ms > MAX_FRAME_MS:
        reasons.append(f"frame {desc.frame_ms:g} ms exceeds {MAX_FRAME_MS:g} ms")
    if desc.lookahead_ms > MAX_LOOKAHEAD_MS:
        reasons.append(f"lookahead {desc.lookahead_ms:g} ms exceeds {MAX_LOOKAHEAD_MS:g} ms")
    return StructuralVerdict(not reasons, reasons)


def host_cpu() -> str:
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


@dataclass
class ComplianceReport:
    backend: str
    frame_ms: float
    lookahead_ms: float
    budget_ms: float
    policy: str
    warmup_frames: int
    n_frames: int
    frame_times_ms: list
    mean_ms: float
    p99_ms: float
    max_ms: float
    frames_over_budget: int
    structural_pass: bool
    structural_reasons: list
    timing_pass: bool
    failed_at_frame: Optional[int] = None
    error: Optional[str] = None
    host_cpu: str = ""

    @property
    def passed(self) -> bool:
        return self.structural_pass and self.timing_pass

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        # a failed run has no timing statistics; keep the JSON strict
        for k in ("mean_ms", "p99_ms", "max_ms"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


def _stat(times, policy):
    return {"mean": float(np.mean(times)), "p99": float(np.percentile(times, 99)),
            "max": float(np.max(times))}[policy]


def measure(desc: BackendDescriptor, clip: AudioClip, warmup_frames: int = WARMUP_FRAMES,
            policy: str = "mean",
            clock: Callable[[], int] = time.perf_counter_ns) -> tuple[ComplianceReport, Optional[AudioClip]]:
    """Stream ``clip`` through the processor frame by frame, timing each call.

    The budget is half the frame duration. ``policy`` picks the statistic that
    must stay under it (default: mean); mean, p99 and max are always reported.
    Returns the report and the processed clip (``None`` if the processor failed).
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    frame = frame_length(desc.frame_ms, clip.sample_rate_hz)
    look = int(math.floor(desc.lookahead_ms * clip.sample_rate_hz / 1000.0 + 1e-9))
    n_frames = -(-len(clip) // frame)
    if n_frames < warmup_frames + MIN_TIMED_FRAMES:
        raise ValueError(f"clip gives {n_frames} frames; need at least "
                         f"{warmup_frames + MIN_TIMED_FRAMES} (warmup + {MIN_TIMED_FRAMES})")
    padded = np.zeros(n_frames * frame + look)
    padded[:len(clip)] = clip.samples
    out = np.empty(n_frames * frame)
    structure = check_structure(desc)
    budget = desc.frame_ms / 2.0
    times = []
    failed_at, error = None, None

    for i in range(n_frames):
        start = i * frame
        cur = padded[start:start + frame].copy()
        fut = padded[start + frame:start + frame + look].copy()
        cur.flags.writeable = False
        fut.flags.writeable = False
        try:
            t0 = clock()
            y = desc.processor(cur, fut)
            t1 = clock()
            y = np.asarray(y, dtype=np.float64).reshape(-1)
            if y.shape[0] != frame:
                raise ValueError(f"processor returned {y.shape[0]} samples, expected {frame}")
        except Exception as exc:
            failed_at, error = i, f"{type(exc).__name__}: {exc}"
            break
        out[start:start + frame] = y
        if i >= warmup_frames:
            times.append((t1 - t0) / 1e6)

    ok = failed_at is None and bool(times)
    stats = {p: _stat(times, p) if ok else math.inf for p in POLICIES}
    report = ComplianceReport(
        backend=desc.name, frame_ms=desc.frame_ms, lookahead_ms=desc.lookahead_ms,
        budget_ms=budget, policy=policy, warmup_frames=warmup_frames, n_frames=n_frames,
        frame_times_ms=[float(t) for t in times],
        mean_ms=stats["mean"], p99_ms=stats["p99"], max_ms=stats["max"],
        frames_over_budget=int(np.count_nonzero(np.asarray(times) >= budget)),
        structural_pass=structure.passed, structural_reasons=structure.reasons,
        timing_pass=ok and stats[policy] < budget,
        failed_at_frame=failed_at, error=error, host_cpu=host_cpu())
    if failed_at is not None:
        return report, None
    return report, clip.with_samples(out[:len(clip)])


def passthrough(frame: np.ndarray, future: np.ndarray) -> np.ndarray:
    return frame


# Subprocess backends: each request is <uint32 frame_len><uint32 future_len>
# followed by frame_len + future_len float32 LE samples; each reply is
# <uint32 n> followed by n float32 LE samples.
_REQ = struct.Struct("<II")
_LEN = struct.Struct("<I")


def _read_exact(stream, n):
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise EOFError("backend stream closed")
        buf += chunk
    return buf


class SubprocessProcessor:
    """Frame processor running in a child process over stdin/stdout."""

    def __init__(self, argv):
        if isinstance(argv, str):
            argv = shlex.split(argv)
        self.argv = list(argv)
        self.proc = subprocess.Popen(self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

    def __call__(self, frame, future):
        payload = np.concatenate([frame, future]).astype("<f4").tobytes()
        self.proc.stdin.write(_REQ.pack(len(frame), len(future)) + payload)
        self.proc.stdin.flush()
        (n,) = _LEN.unpack(_read_exact(self.proc.stdout, _LEN.size))
        return np.frombuffer(_read_exact(self.proc.stdout, 4 * n), dtype="<f4").astype(np.float64)

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_stdio(processor: Processor, stdin=None, stdout=None) -> None:
    """Backend side of the subprocess protocol; returns when stdin closes."""
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    while True:
        head = stdin.read(_REQ.size)
        if not head:
            return
        if len(head) < _REQ.size:
            head += _read_exact(stdin, _REQ.size - len(head))
        n_frame, n_future = _REQ.unpack(head)
        data = np.frombuffer(_read_exact(stdin, 4 * (n_frame + n_future)), dtype="<f4")
        y = np.asarray(processor(data[:n_frame], data[n_frame:]), dtype="<f4")
        stdout.write(_LEN.pack(y.shape[0]) + y.tobytes())
        stdout.flush()


def load_processor(spec: str) -> Processor:
    """``passthrough``, ``python:package.module:callable`` or ``exec:<command line>``."""
    if spec == "passthrough":
        return passthrough
    kind, _, target = spec.partition(":")
    if kind == "python":
        module, _, attr = target.partition(":")
        if not module or not attr:
            raise ValueError(f"python backend must be 'python:module:callable', got {spec!r}")
        return getattr(importlib.import_module(module), attr)
    if kind == "exec":
        return SubprocessProcessor(target)
    raise ValueError(f"unknown backend spec {spec!r}")
