"""Signatures over ``(origin, value, marker)`` triples.

Two schemes share one interface:

* :class:`HmacScheme` (default) signs with per-node secrets and verifies
  through the scheme object itself, which acts as the simulator's trust
  root. Verification keys handed out are fingerprints, not secrets.
* :class:`Ed25519Scheme` is a real public-key scheme from ``cryptography``;
  slower, but its verification keys can be published as-is.

Values are serialized by their IEEE-754 bit pattern, so a 1-ulp change
breaks a signature.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_TRIPLE = struct.Struct(">q d q")


def encode_triple(origin: int, value: float, marker: int) -> bytes:
    value = float(value)
    if math.isnan(value):
        raise ValueError("NaN values cannot be signed")
    return _TRIPLE.pack(int(origin), value, int(marker))


@dataclass(frozen=True)
class KeyPair:
    node: int
    signing_key: bytes
    verification_key: bytes


class HmacScheme:
    """Keyed-hash signatures; the scheme instance is the trusted verifier."""

    name = "hmac-sha256"
    signature_size = 32

    def __init__(self, m: int, seed: int):
        self._pairs: list[KeyPair] = []
        for node in range(m):
            secret = hashlib.sha256(f"relayabc/{seed}/{node}".encode()).digest()
            fingerprint = hashlib.sha256(b"vk" + secret).digest()
            self._pairs.append(KeyPair(node, secret, fingerprint))
        self._secret_by_vk = {p.verification_key: p.signing_key for p in self._pairs}
        self._verify_cached = lru_cache(maxsize=1 << 16)(self._verify_uncached)

    def keypair(self, node: int) -> KeyPair:
        return self._pairs[node]

    def verification_keys(self) -> tuple[bytes, ...]:
        return tuple(p.verification_key for p in self._pairs)

    def sign(self, key: bytes, origin: int, value: float, marker: int) -> bytes:
        return hmac.new(key, encode_triple(origin, value, marker), hashlib.sha256).digest()

    def verify(self, vkey: bytes, origin: int, value: float, marker: int, sig) -> bool:
        if not isinstance(sig, (bytes, bytearray)) or len(sig) != self.signature_size:
            return False
        try:
            return self._verify_cached(bytes(vkey), int(origin), float(value), int(marker), bytes(sig))
        except (TypeError, ValueError, OverflowError):
            return False

    def _verify_uncached(self, vkey, origin, value, marker, sig) -> bool:
        secret = self._secret_by_vk.get(vkey)
        if secret is None:
            return False
        expected = self.sign(secret, origin, value, marker)
        return hmac.compare_digest(expected, sig)


class Ed25519Scheme:
    """Ed25519 signatures; verification keys are raw public key bytes."""

    name = "ed25519"
    signature_size = 64

    def __init__(self, m: int, seed: int):
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
        from cryptography.hazmat.primitives.serialization import (
            Encoding,
            NoEncryption,
            PrivateFormat,
            PublicFormat,
        )

        self._pairs = []
        for node in range(m):
            raw = hashlib.sha256(f"relayabc-ed25519/{seed}/{node}".encode()).digest()
            sk = Ed25519PrivateKey.from_private_bytes(raw)
            pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
            sk_bytes = sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
            self._pairs.append(KeyPair(node, sk_bytes, pk))

    def keypair(self, node: int) -> KeyPair:
        return self._pairs[node]

    def verification_keys(self) -> tuple[bytes, ...]:
        return tuple(p.verification_key for p in self._pairs)

    def sign(self, key: bytes, origin: int, value: float, marker: int) -> bytes:
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

        return Ed25519PrivateKey.from_private_bytes(key).sign(
            encode_triple(origin, value, marker)
        )

    def verify(self, vkey: bytes, origin: int, value: float, marker: int, sig) -> bool:
        from cryptography.exceptions import InvalidSignature
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

        try:
            Ed25519PublicKey.from_public_bytes(bytes(vkey)).verify(
                bytes(sig), encode_triple(origin, value, marker)
            )
        except (InvalidSignature, TypeError, ValueError, OverflowError, struct.error):
            return False
        return True


SCHEMES = {"hmac": HmacScheme, "ed25519": Ed25519Scheme}


def make_scheme(name: str, m: int, seed: int):
    try:
        return SCHEMES[name](m, seed)
    except KeyError:
        raise ValueError(f"unknown signature scheme {name!r}") from None


class Signer:
    """Signs on behalf of one node. Holds only that node's secret."""

    def __init__(self, scheme, node: int):
        self.node = node
        self._scheme = scheme
        self._key = scheme.keypair(node).signing_key

    def sign(self, origin: int, value: float, marker: int) -> bytes:
        return self._scheme.sign(self._key, origin, value, marker)


class Verifier:
    """Public verification surface: every node's verification key, no secrets."""

    def __init__(self, scheme):
        self._scheme = scheme
        self.verification_keys = scheme.verification_keys()

    def verify(self, origin: int, value: float, marker: int, sig) -> bool:
        if not 0 <= origin < len(self.verification_keys):
            return False
        if isinstance(value, (float, int, np.floating)) and math.isnan(value):
            return False
        return self._scheme.verify(self.verification_keys[origin], origin, value, marker, sig)
