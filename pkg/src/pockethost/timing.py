"""Phase timings for one secured invocation cycle.

Thirteen integer-microsecond durations cover the whole request/response
path; the two transmission fields stay zero in loopback mode. Durations
are floored from the nanosecond monotonic clock so the thirteen-term sum
can never exceed the wall clock of the enclosing interval.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, fields

PHASE_FIELDS = (
    "t_cc",      # client constructs the request
    "t_reqec",   # client encrypts + signs the request
    "t_reqs",    # client serializes the secured request
    "t_reqt",    # request transmission (zero in loopback)
    "t_reqd",    # host deserializes the request
    "t_reqdc",   # host checks + unwraps + decrypts the request
    "t_process", # host runs the handler and populates the response
    "t_resec",   # host encrypts + signs the response
    "t_ress",    # host serializes the response
    "t_rest",    # response transmission (zero in loopback)
    "t_resd",    # client deserializes the response
    "t_resdc",   # client checks + decrypts the response
    "t_cp",      # client processes the result
)

CLIENT_FIELDS = ("t_cc", "t_reqec", "t_reqs", "t_resd", "t_resdc", "t_cp")
HOST_FIELDS = ("t_reqd", "t_reqdc", "t_process", "t_resec", "t_ress")
SECURITY_FIELDS = ("t_reqec", "t_reqdc", "t_resec", "t_resdc")


@dataclass
class PhaseTimings:
    t_cc: int = 0
    t_reqec: int = 0
    t_reqs: int = 0
    t_reqt: int = 0
    t_reqd: int = 0
    t_reqdc: int = 0
    t_process: int = 0
    t_resec: int = 0
    t_ress: int = 0
    t_rest: int = 0
    t_resd: int = 0
    t_resdc: int = 0
    t_cp: int = 0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in PHASE_FIELDS}

    @classmethod
    def from_dict(cls, values: dict) -> "PhaseTimings":
        return cls(**{name: int(values.get(name, 0)) for name in PHASE_FIELDS})

    def merged_with(self, other: "PhaseTimings") -> "PhaseTimings":
        """Field-wise sum; used to join client-side and host-side halves."""
        return PhaseTimings(**{
            name: getattr(self, name) + getattr(other, name) for name in PHASE_FIELDS
        })


def total_invocation_time(t: PhaseTimings) -> int:
    """Whole-cycle duration: the exact thirteen-term sum, in microseconds."""
    return (t.t_cc + t.t_reqec + t.t_reqs + t.t_reqt + t.t_reqd + t.t_reqdc
            + t.t_process + t.t_resec + t.t_ress + t.t_rest + t.t_resd
            + t.t_resdc + t.t_cp)


def security_effort(t: PhaseTimings) -> int:
    """Message-security share of the cycle: the four crypto phases, in microseconds."""
    return t.t_reqec + t.t_reqdc + t.t_resec + t.t_resdc


class PhaseClock:
    """Collects phase durations with non-overlapping start/stop stamps."""

    def __init__(self):
        self.micros: dict[str, int] = {}
        self.stamps: list[tuple[str, int, int]] = []

    @contextmanager
    def measure(self, phase: str):
        if phase not in PHASE_FIELDS:
            raise ValueError(f"unknown phase {phase!r}")
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            stop = time.perf_counter_ns()
            self.micros[phase] = self.micros.get(phase, 0) + (stop - start) // 1000
            self.stamps.append((phase, start, stop))

    def timings(self) -> PhaseTimings:
        return PhaseTimings(**{name: self.micros.get(name, 0) for name in PHASE_FIELDS})
