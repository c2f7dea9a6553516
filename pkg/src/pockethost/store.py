"""Line-delimited JSON credential/ACL store.

One JSON object per line; later records supersede earlier ones (the file is
append-only). Two record shapes:

    {"type": "principal", "id": ..., "salt": hex, "verifier": hex,
     "iterations": int, "roles": [...], "public_key_pem": str | null}
    {"type": "acl", "service": ..., "role": ..., "mode": "Allow" | "RequireApproval" | "Deny"}

Plaintext passwords never appear here: only salted iterated verifiers.
"""

from __future__ import annotations

import json
import os

from .crypto import KeyPair
from .endpoint import AccessControl, AclEntry, AclMode, Principal, PrincipalRegistry


def principal_record(principal: Principal) -> dict:
    return {
        "type": "principal",
        "id": principal.id,
        "salt": principal.salt.hex(),
        "verifier": principal.verifier.hex(),
        "iterations": principal.iterations,
        "roles": sorted(principal.roles),
        "public_key_pem": principal.public_key.public_pem() if principal.public_key else None,
    }


def acl_record(entry: AclEntry) -> dict:
    return {"type": "acl", "service": entry.service, "role": entry.role,
            "mode": entry.mode.value}


def append_record(path: str, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _principal_from_record(rec: dict) -> Principal:
    pem = rec.get("public_key_pem")
    return Principal(
        id=rec["id"],
        salt=bytes.fromhex(rec["salt"]),
        verifier=bytes.fromhex(rec["verifier"]),
        iterations=int(rec["iterations"]),
        roles=frozenset(rec.get("roles", [])),
        public_key=KeyPair.from_public_pem(pem) if pem else None,
    )


def load_store(path: str) -> tuple[PrincipalRegistry, AccessControl]:
    registry = PrincipalRegistry()
    acl = AccessControl()
    if not os.path.exists(path):
        return registry, acl
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad record: {exc}") from None
            if rec.get("type") == "principal":
                registry.add(_principal_from_record(rec))
            elif rec.get("type") == "acl":
                acl.put(AclEntry(rec["service"], rec["role"], AclMode(rec["mode"])))
            else:
                raise ValueError(f"{path}:{line_no}: unknown record type {rec.get('type')!r}")
    return registry, acl
