"""Independent oracles used to cross-check production code paths.

These deliberately avoid the libraries the package itself uses for the
same operation: SHA-1 and base64 are implemented from scratch, RSA
signing/verification uses plain modular arithmetic over the key numbers.
"""

from __future__ import annotations

import hashlib
import struct

# ---------------------------------------------------------------------------
# SHA-1 (pure Python)
# ---------------------------------------------------------------------------


def _rol(value: int, bits: int) -> int:
    return ((value << bits) | (value >> (32 - bits))) & 0xFFFFFFFF


def sha1(message: bytes) -> bytes:
    h = [0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0]
    length = len(message) * 8
    message += b"\x80"
    message += b"\x00" * ((56 - len(message) % 64) % 64)
    message += struct.pack(">Q", length)
    for chunk_start in range(0, len(message), 64):
        w = list(struct.unpack(">16I", message[chunk_start : chunk_start + 64]))
        for i in range(16, 80):
            w.append(_rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1))
        a, b, c, d, e = h
        for i in range(80):
            if i < 20:
                f, k = (b & c) | (~b & d), 0x5A827999
            elif i < 40:
                f, k = b ^ c ^ d, 0x6ED9EBA1
            elif i < 60:
                f, k = (b & c) | (b & d) | (c & d), 0x8F1BBCDC
            else:
                f, k = b ^ c ^ d, 0xCA62C1D6
            a, b, c, d, e = (
                (_rol(a, 5) + f + e + k + w[i]) & 0xFFFFFFFF,
                a,
                _rol(b, 30),
                c,
                d,
            )
        h = [(x + y) & 0xFFFFFFFF for x, y in zip(h, (a, b, c, d, e))]
    return struct.pack(">5I", *h)


# ---------------------------------------------------------------------------
# Base64 (table-driven)
# ---------------------------------------------------------------------------

_B64_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
_B64_REVERSE = {c: i for i, c in enumerate(_B64_ALPHABET)}


def b64encode(data: bytes) -> str:
    out = []
    for i in range(0, len(data), 3):
        block = data[i : i + 3]
        bits = int.from_bytes(block + b"\x00" * (3 - len(block)), "big")
        chars = [
            _B64_ALPHABET[(bits >> 18) & 63],
            _B64_ALPHABET[(bits >> 12) & 63],
            _B64_ALPHABET[(bits >> 6) & 63],
            _B64_ALPHABET[bits & 63],
        ]
        if len(block) == 1:
            chars[2] = chars[3] = "="
        elif len(block) == 2:
            chars[3] = "="
        out.append("".join(chars))
    return "".join(out)


def b64decode(text: str) -> bytes:
    if len(text) % 4:
        raise ValueError("length not a multiple of four")
    out = bytearray()
    for i in range(0, len(text), 4):
        block = text[i : i + 4]
        pad = block.count("=")
        if pad and i + 4 != len(text):
            raise ValueError("padding before the final block")
        bits = 0
        for char in block.rstrip("="):
            bits = (bits << 6) | _B64_REVERSE[char]
        bits <<= 6 * pad
        raw = bits.to_bytes(3, "big")
        out.extend(raw[: 3 - pad])
    return bytes(out)


# ---------------------------------------------------------------------------
# Percent decoding (form-urlencoded values)
# ---------------------------------------------------------------------------


def percent_decode(text: str) -> bytes:
    out = bytearray()
    i = 0
    while i < len(text):
        char = text[i]
        if char == "+":
            out.append(0x20)
            i += 1
        elif char == "%":
            out.append(int(text[i + 1 : i + 3], 16))
            i += 3
        else:
            out.extend(char.encode("utf-8"))
            i += 1
    return bytes(out)


# ---------------------------------------------------------------------------
# RSA PKCS#1 v1.5 with SHA-256 (modular arithmetic over the key numbers)
# ---------------------------------------------------------------------------

_SHA256_DIGEST_INFO = bytes.fromhex("3031300d060960864801650304020105000420")


def _emsa_pkcs1_v15(message: bytes, em_len: int) -> bytes:
    digest = hashlib.sha256(message).digest()
    t = _SHA256_DIGEST_INFO + digest
    if em_len < len(t) + 11:
        raise ValueError("modulus too small")
    return b"\x00\x01" + b"\xff" * (em_len - len(t) - 3) + b"\x00" + t


def rsa_sign(message: bytes, n: int, d: int) -> bytes:
    em_len = (n.bit_length() + 7) // 8
    em = int.from_bytes(_emsa_pkcs1_v15(message, em_len), "big")
    return pow(em, d, n).to_bytes(em_len, "big")


def rsa_verify(message: bytes, signature: bytes, n: int, e: int) -> bool:
    em_len = (n.bit_length() + 7) // 8
    if len(signature) != em_len:
        return False
    decoded = pow(int.from_bytes(signature, "big"), e, n).to_bytes(em_len, "big")
    return decoded == _emsa_pkcs1_v15(message, em_len)
