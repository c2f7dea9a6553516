"""Loopback benchmark harness and report emitter.

Client and host run in one process handing bytes directly, so both
transmission phases are zero and the thirteen-phase decomposition isolates
processing and security cost. Rows report per-phase medians over the
repetitions (warm-ups excluded), plus the two derived totals.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import services
from .client import InvocationSpec, PasswordCredentials, invoke_with_sender
from .crypto import CryptoProfile, KeyPair, all_profiles
from .endpoint import AclEntry, AclMode, make_principal
from .errors import BenchmarkRowFailed
from .host import HostConfig, OperationDef, ServiceDescriptor, ServiceHost
from .msgsec import SessionClaim, TrustedPeers
from .timing import PHASE_FIELDS, PhaseTimings

DEFAULT_REQUEST_BYTES = 1024
DEFAULT_RESPONSE_BYTES = 2048
DEFAULT_REPETITIONS = 50
DEFAULT_WARMUP = 5
MIN_REPETITIONS = 5

CSV_COLUMNS = (
    "symmetric", "key_transport_bits", "signature",
    "request_bytes", "response_bytes", "repetitions",
    *PHASE_FIELDS,
    "t_mwsp", "t_mwsse",
)


@dataclass
class LoopbackOutcome:
    timings: PhaseTimings
    wall_us: int
    result_octets: int


@dataclass
class BenchmarkRow:
    profile: CryptoProfile
    request_bytes: int
    response_bytes: int
    repetitions: int
    phase_medians: dict[str, float]

    @property
    def t_mwsp(self) -> float:
        return float(sum(self.phase_medians[name] for name in PHASE_FIELDS))

    @property
    def t_mwsse(self) -> float:
        return float(sum(self.phase_medians[name]
                         for name in ("t_reqec", "t_reqdc", "t_resec", "t_resdc")))

    def as_record(self) -> dict:
        record: dict = {
            "symmetric": self.profile.symmetric,
            "key_transport_bits": self.profile.key_transport_bits,
            "signature": self.profile.signature,
            "request_bytes": self.request_bytes,
            "response_bytes": self.response_bytes,
            "repetitions": self.repetitions,
        }
        for name in PHASE_FIELDS:
            record[name] = self.phase_medians[name]
        record["t_mwsp"] = self.t_mwsp
        record["t_mwsse"] = self.t_mwsse
        return record


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow] = field(default_factory=list)

    def row_for(self, profile: CryptoProfile) -> BenchmarkRow | None:
        for row in self.rows:
            if row.profile == profile:
                return row
        return None


@dataclass
class LoopbackRig:
    """Host plus a pre-authenticated client identity, wired in-process."""

    host: ServiceHost
    spec_template: InvocationSpec
    claim: SessionClaim

    def spec_for(self, profile: CryptoProfile, params: list[tuple[str, str]]) -> InvocationSpec:
        template = self.spec_template
        return InvocationSpec(
            endpoint="loopback:", service=template.service, operation=template.operation,
            params=params, profile=profile, credentials=template.credentials,
            signing_keys=template.signing_keys,
            host_transport_public=template.host_transport_public,
            host_signing_public=template.host_signing_public,
            signer_id=template.signer_id, host_id=template.host_id)


def build_loopback_rig(approval_timeout_s: float = 30.0,
                       rate_capacity: int = 1_000_000) -> LoopbackRig:
    """Fresh keys, one Allow-listed principal, the Echo service, no HTTP."""
    transport_keys = {1024: KeyPair.generate_rsa(1024), 2048: KeyPair.generate_rsa(2048)}
    host_signing = {"RSA": KeyPair.generate_rsa(1024), "DSA": KeyPair.generate_dsa()}
    client_signing = {"RSA": KeyPair.generate_rsa(1024), "DSA": KeyPair.generate_dsa()}
    trusted = TrustedPeers()
    trusted.add("bench-client", client_signing["RSA"])
    trusted.add("bench-client", client_signing["DSA"])
    config = HostConfig(
        transport_keys=transport_keys, signing_keys=host_signing, trusted=trusted,
        admin_secret="bench", approval_timeout_s=approval_timeout_s,
        rate_capacity=rate_capacity, rate_window_s=60.0)
    host = ServiceHost(config)
    host.registry.add(make_principal("bench", "bench-password", roles=("bench",)))
    host.acl.put(AclEntry(services.ECHO_SERVICE, "bench", AclMode.ALLOW))
    host.deploy_service(ServiceDescriptor(
        name=services.ECHO_SERVICE,
        operations=[OperationDef(services.ECHO_OPERATION, ("payload",), services.ECHO_RESPONSE)],
        handler=services.echo_handler,
        wsdl_doc=services.ECHO_WSDL,
    ))
    token = host.authenticator.authenticate_password("bench", "bench-password")
    template = InvocationSpec(
        endpoint="loopback:", service=services.ECHO_SERVICE, operation=services.ECHO_OPERATION,
        params=[("payload", "x")], profile=all_profiles()[0],
        credentials=PasswordCredentials("bench", "bench-password"),
        signing_keys=client_signing,
        host_transport_public={bits: kp.public_only() for bits, kp in transport_keys.items()},
        host_signing_public={alg: kp.public_only() for alg, kp in host_signing.items()},
        signer_id="bench-client", host_id=config.signer_id)
    return LoopbackRig(host, template, SessionClaim(token.token_id))


def loopback_invoke(rig: LoopbackRig, profile: CryptoProfile,
                    params: list[tuple[str, str]],
                    source: str = "loopback") -> LoopbackOutcome:
    """One full cycle with bytes handed directly; t_reqt = t_rest = 0."""
    host_timings: list[PhaseTimings] = []

    def sender(service: str, raw: bytes) -> bytes:
        out, timings = rig.host.handle_request_timed(raw, source, service_hint=service)
        host_timings.append(timings)
        return out

    spec = rig.spec_for(profile, params)
    wall_start = time.perf_counter_ns()
    outcome = invoke_with_sender(spec, rig.claim, sender)
    wall_us = (time.perf_counter_ns() - wall_start) // 1000
    merged = outcome.timings.merged_with(host_timings[0])
    return LoopbackOutcome(merged, wall_us, outcome.response_octets)


def run_benchmark(matrix: list[CryptoProfile] | None = None,
                  request_bytes: int = DEFAULT_REQUEST_BYTES,
                  response_bytes: int = DEFAULT_RESPONSE_BYTES,
                  repetitions: int = DEFAULT_REPETITIONS,
                  warmup: int = DEFAULT_WARMUP,
                  rig: LoopbackRig | None = None,
                  parallel: int = 1) -> BenchmarkReport:
    """Medians over ``repetitions`` per profile row, deterministic row order."""
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"repetitions must be at least {MIN_REPETITIONS}")
    matrix = list(matrix) if matrix else all_profiles()
    matrix.sort(key=lambda p: p.sort_key)
    rig = rig or build_loopback_rig()
    params = services.request_params_for_targets(request_bytes, response_bytes)
    if parallel > 1:
        print("warning: --parallel timings are contended and non-authoritative",
              file=sys.stderr)

    def one_rep(profile: CryptoProfile, index: int) -> PhaseTimings:
        try:
            return loopback_invoke(rig, profile, params,
                                   source=f"bench-{profile.label}-{index}").timings
        except Exception as exc:
            raise BenchmarkRowFailed(
                f"profile {profile.label}, repetition {index}: "
                f"{type(exc).__name__}: {exc}") from exc

    # repetitions interleave round-robin across the matrix so machine-load
    # drift lands on every row equally; row comparisons stay paired
    schedule = [(profile, index)
                for index in range(warmup + repetitions)
                for profile in matrix]
    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            runs = list(pool.map(lambda job: one_rep(*job), schedule))
    else:
        runs = [one_rep(profile, index) for profile, index in schedule]

    samples: dict[CryptoProfile, list[PhaseTimings]] = {p: [] for p in matrix}
    for (profile, index), timings in zip(schedule, runs):
        if index >= warmup:
            samples[profile].append(timings)

    report = BenchmarkReport()
    for profile in matrix:
        medians = {
            name: float(statistics.median(getattr(s, name) for s in samples[profile]))
            for name in PHASE_FIELDS
        }
        report.rows.append(BenchmarkRow(profile, request_bytes, response_bytes,
                                        repetitions, medians))
    return report


# --- report emission -----------------------------------------------------------


def emit_report(report: BenchmarkReport, format: str) -> bytes:
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            record = row.as_record()
            writer.writerow([record[name] for name in CSV_COLUMNS])
        return out.getvalue().encode("utf-8")
    if format == "json":
        payload = {"rows": [row.as_record() for row in report.rows]}
        return (json.dumps(payload, indent=2) + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def parse_report_json(data: bytes) -> BenchmarkReport:
    payload = json.loads(data.decode("utf-8"))
    rows = []
    for record in payload["rows"]:
        profile = CryptoProfile(record["symmetric"], int(record["key_transport_bits"]),
                                record["signature"])
        medians = {name: float(record[name]) for name in PHASE_FIELDS}
        rows.append(BenchmarkRow(profile, int(record["request_bytes"]),
                                 int(record["response_bytes"]),
                                 int(record["repetitions"]), medians))
    return BenchmarkReport(rows)
