"""Independent pure-Python AES-CBC oracle for known-answer tests.

Everything is derived from first principles (GF(2^8) arithmetic, the affine
S-box construction, the FIPS key schedule) rather than copied tables, so it
shares no code or constants with the production cipher layer. Correctness of
the oracle itself is anchored to the two FIPS-197 appendix block vectors in
test_crypto.py.

Slow by design; only use for small test payloads.
"""

from __future__ import annotations


def _gf_mul(a: int, b: int) -> int:
    out = 0
    for _ in range(8):
        if b & 1:
            out ^= a
        high = a & 0x80
        a = (a << 1) & 0xFF
        if high:
            a ^= 0x1B  # x^8 + x^4 + x^3 + x + 1
        b >>= 1
    return out


def _gf_inv(a: int) -> int:
    if a == 0:
        return 0
    # a^(2^8 - 2) in GF(2^8)
    result, power = 1, a
    exponent = 254
    while exponent:
        if exponent & 1:
            result = _gf_mul(result, power)
        power = _gf_mul(power, power)
        exponent >>= 1
    return result


def _build_sbox() -> list[int]:
    sbox = []
    for value in range(256):
        inv = _gf_inv(value)
        out = 0
        for bit in range(8):
            b = ((inv >> bit) ^ (inv >> ((bit + 4) % 8)) ^ (inv >> ((bit + 5) % 8))
                 ^ (inv >> ((bit + 6) % 8)) ^ (inv >> ((bit + 7) % 8)) ^ (0x63 >> bit)) & 1
            out |= b << bit
        sbox.append(out)
    return sbox


_SBOX = _build_sbox()


def _key_expansion(key: bytes) -> list[list[int]]:
    nk = len(key) // 4
    nr = nk + 6
    words = [list(key[4 * i:4 * i + 4]) for i in range(nk)]
    rcon = 1
    for i in range(nk, 4 * (nr + 1)):
        temp = list(words[i - 1])
        if i % nk == 0:
            temp = temp[1:] + temp[:1]
            temp = [_SBOX[b] for b in temp]
            temp[0] ^= rcon
            rcon = _gf_mul(rcon, 2)
        elif nk > 6 and i % nk == 4:
            temp = [_SBOX[b] for b in temp]
        words.append([w ^ t for w, t in zip(words[i - nk], temp)])
    return words


def _encrypt_block(block: bytes, words: list[list[int]]) -> bytes:
    nr = len(words) // 4 - 1
    # state[col][row] as FIPS words
    state = [list(block[4 * c:4 * c + 4]) for c in range(4)]

    def add_round_key(round_index: int) -> None:
        for c in range(4):
            for r in range(4):
                state[c][r] ^= words[4 * round_index + c][r]

    def sub_bytes() -> None:
        for c in range(4):
            for r in range(4):
                state[c][r] = _SBOX[state[c][r]]

    def shift_rows() -> None:
        for r in range(1, 4):
            row = [state[c][r] for c in range(4)]
            row = row[r:] + row[:r]
            for c in range(4):
                state[c][r] = row[c]

    def mix_columns() -> None:
        for c in range(4):
            a = state[c]
            state[c] = [
                _gf_mul(a[0], 2) ^ _gf_mul(a[1], 3) ^ a[2] ^ a[3],
                a[0] ^ _gf_mul(a[1], 2) ^ _gf_mul(a[2], 3) ^ a[3],
                a[0] ^ a[1] ^ _gf_mul(a[2], 2) ^ _gf_mul(a[3], 3),
                _gf_mul(a[0], 3) ^ a[1] ^ a[2] ^ _gf_mul(a[3], 2),
            ]

    add_round_key(0)
    for rnd in range(1, nr):
        sub_bytes()
        shift_rows()
        mix_columns()
        add_round_key(rnd)
    sub_bytes()
    shift_rows()
    add_round_key(nr)
    return bytes(b for col in state for b in col)


def aes_encrypt_block(key: bytes, block: bytes) -> bytes:
    if len(key) not in (16, 24, 32) or len(block) != 16:
        raise ValueError("bad key or block length")
    return _encrypt_block(block, _key_expansion(key))


def pkcs7_pad(data: bytes, block: int = 16) -> bytes:
    n = block - len(data) % block
    return data + bytes([n]) * n


def aes_cbc_encrypt(key: bytes, iv: bytes, plaintext: bytes) -> bytes:
    """iv || ciphertext over PKCS#7-padded plaintext, matching the wire rule."""
    words = _key_expansion(key)
    padded = pkcs7_pad(plaintext)
    out = bytearray()
    prev = iv
    for i in range(0, len(padded), 16):
        block = bytes(p ^ v for p, v in zip(padded[i:i + 16], prev))
        prev = _encrypt_block(block, words)
        out.extend(prev)
    return iv + bytes(out)
