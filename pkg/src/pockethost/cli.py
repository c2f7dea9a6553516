"""Command-line entry points.

pockethost-host    run the service host from a JSON config
pockethost-client  invoke a service and print the result plus phase table
pockethost-bench   run the loopback benchmark matrix and emit a report
pockethost-keygen  generate RSA/DSA PEM keypairs for configs
"""

from __future__ import annotations

import argparse
import json
import sys

from . import services
from .client import (
    HttpTransport,
    InvocationSpec,
    KeyCredentials,
    PasswordCredentials,
    invoke,
)
from .crypto import CryptoProfile, KeyPair, all_profiles
from .errors import PocketHostError
from .host import HostConfig, OperationDef, ServiceDescriptor, ServiceHost
from .perf import (
    DEFAULT_REPETITIONS,
    DEFAULT_REQUEST_BYTES,
    DEFAULT_RESPONSE_BYTES,
    DEFAULT_WARMUP,
    emit_report,
    run_benchmark,
)
from .timing import PHASE_FIELDS, security_effort, total_invocation_time


def host_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pockethost-host",
                                     description="Run the secured service host.")
    parser.add_argument("--config", required=True, help="JSON config file (see README)")
    args = parser.parse_args(argv)
    config = HostConfig.from_json_file(args.config)
    host = ServiceHost(config)
    host.deploy_service(ServiceDescriptor(
        name=services.ECHO_SERVICE,
        operations=[OperationDef(services.ECHO_OPERATION, ("payload",), services.ECHO_RESPONSE)],
        handler=services.echo_handler,
        wsdl_doc=services.ECHO_WSDL,
    ))
    from .httpd import serve

    server = serve(host)
    print(f"listening on http://{config.listen_host}:{config.listen_port}"
          f" (services: {', '.join(sorted(host.services))})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _client_spec_from_config(raw: dict, args) -> InvocationSpec:
    creds_raw = raw["credentials"]
    if creds_raw.get("kind") == "key":
        credentials = KeyCredentials(creds_raw["principal_id"],
                                     KeyPair.from_private_pem(creds_raw["private_key_pem"]))
    else:
        credentials = PasswordCredentials(creds_raw["principal_id"], creds_raw["password"])
    signing = {}
    if raw.get("rsa_signing_pem"):
        signing["RSA"] = KeyPair.from_private_pem(raw["rsa_signing_pem"])
    if raw.get("dsa_signing_pem"):
        signing["DSA"] = KeyPair.from_private_pem(raw["dsa_signing_pem"])
    transport_pub = {}
    for bits in (1024, 2048):
        pem = raw.get(f"host_transport_{bits}_pem")
        if pem:
            transport_pub[bits] = KeyPair.from_public_pem(pem)
    signing_pub = {}
    if raw.get("host_rsa_signing_pem"):
        signing_pub["RSA"] = KeyPair.from_public_pem(raw["host_rsa_signing_pem"])
    if raw.get("host_dsa_signing_pem"):
        signing_pub["DSA"] = KeyPair.from_public_pem(raw["host_dsa_signing_pem"])
    return InvocationSpec(
        endpoint=raw["endpoint"],
        service=args.service,
        operation=args.op,
        params=[tuple(p.split("=", 1)) for p in args.param],
        profile=CryptoProfile.parse(args.profile),
        credentials=credentials,
        signing_keys=signing,
        host_transport_public=transport_pub,
        host_signing_public=signing_pub,
        signer_id=raw.get("signer_id", "client"),
        host_id=raw.get("host_id", "host"),
    )


def client_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pockethost-client",
                                     description="Invoke a secured service.")
    sub = parser.add_subparsers(dest="command", required=True)
    inv = sub.add_parser("invoke", help="invoke one operation")
    inv.add_argument("--config", required=True, help="client JSON config (see README)")
    inv.add_argument("--service", required=True)
    inv.add_argument("--op", required=True)
    inv.add_argument("--param", action="append", default=[], metavar="K=V")
    inv.add_argument("--profile", default="AES256/RSA1024/RSAwithSHA1")
    args = parser.parse_args(argv)

    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    spec = _client_spec_from_config(raw, args)
    try:
        outcome = invoke(spec)
    except PocketHostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    from .envelope import canonical_serialize

    print(canonical_serialize(outcome.result).decode("utf-8"))
    print()
    print(f"{'phase':<10} {'us':>10}")
    for name in PHASE_FIELDS:
        value = getattr(outcome.timings, name)
        if value:
            print(f"{name:<10} {value:>10}")
    print(f"{'t_mwsp':<10} {total_invocation_time(outcome.timings):>10}")
    print(f"{'t_mwsse':<10} {security_effort(outcome.timings):>10}")
    return 0


def bench_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pockethost-bench",
                                     description="Loopback benchmark over the algorithm matrix.")
    parser.add_argument("--config", help="optional JSON file with defaults for these flags")
    parser.add_argument("--matrix", default="all",
                        help="'all' or comma-separated profile labels")
    parser.add_argument("--request-bytes", type=int, default=None)
    parser.add_argument("--response-bytes", type=int, default=None)
    parser.add_argument("--reps", type=int, default=None)
    parser.add_argument("--warmup", type=int, default=None)
    parser.add_argument("--parallel", type=int, default=1,
                        help="load-test mode; timings become non-authoritative")
    parser.add_argument("--format", choices=("csv", "json"), default=None)
    parser.add_argument("--out", default=None, help="output path (default: stdout)")
    args = parser.parse_args(argv)

    defaults = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            defaults = json.load(fh)

    def setting(flag, key, fallback):
        return flag if flag is not None else defaults.get(key, fallback)

    matrix_arg = args.matrix if args.matrix != "all" else defaults.get("matrix", "all")
    if matrix_arg == "all":
        matrix = all_profiles()
    else:
        matrix = [CryptoProfile.parse(label) for label in matrix_arg.split(",")]

    report = run_benchmark(
        matrix=matrix,
        request_bytes=setting(args.request_bytes, "request_bytes", DEFAULT_REQUEST_BYTES),
        response_bytes=setting(args.response_bytes, "response_bytes", DEFAULT_RESPONSE_BYTES),
        repetitions=setting(args.reps, "reps", DEFAULT_REPETITIONS),
        warmup=setting(args.warmup, "warmup", DEFAULT_WARMUP),
        parallel=args.parallel,
    )
    data = emit_report(report, setting(args.format, "format", "csv"))
    out_path = args.out or defaults.get("out")
    if out_path:
        with open(out_path, "wb") as fh:
            fh.write(data)
        print(f"wrote {out_path}", file=sys.stderr)
    else:
        sys.stdout.buffer.write(data)
    return 0


def keygen_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pockethost-keygen",
                                     description="Generate PEM keypairs for configs.")
    parser.add_argument("--algorithm", choices=("rsa", "dsa"), default="rsa")
    parser.add_argument("--bits", type=int, default=1024)
    parser.add_argument("--out", required=True, help="path prefix for _private.pem/_public.pem")
    args = parser.parse_args(argv)
    if args.algorithm == "rsa":
        pair = KeyPair.generate_rsa(args.bits)
    else:
        pair = KeyPair.generate_dsa(args.bits)
    with open(f"{args.out}_private.pem", "w", encoding="ascii") as fh:
        fh.write(pair.private_pem())
    with open(f"{args.out}_public.pem", "w", encoding="ascii") as fh:
        fh.write(pair.public_pem())
    print(f"wrote {args.out}_private.pem and {args.out}_public.pem")
    return 0
