import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pockethost.crypto import KeyPair


@pytest.fixture(scope="session")
def keys():
    """One set of keypairs for the whole run; generation is the slow part."""
    return SimpleNamespace(
        client_rsa=KeyPair.generate_rsa(1024),
        client_dsa=KeyPair.generate_dsa(),
        attacker_rsa=KeyPair.generate_rsa(1024),
        host_transport_1024=KeyPair.generate_rsa(1024),
        host_transport_2048=KeyPair.generate_rsa(2048),
        host_rsa=KeyPair.generate_rsa(1024),
        host_dsa=KeyPair.generate_dsa(),
    )
