"""Deterministic bit sources: test subjects and Monte-Carlo engines.

All sources emit a canonical bit stream: the generator's natural output
units (32-bit words for MT19937/WELL, 20-byte digests for the SHA-1
generator, bytes for the keystream and file sources) laid out in order,
most-significant bit first within each unit.  Changing that order is a
breaking change.

A source is single-owner: it carries a bit position and may be handed off
between threads but never shared.  Parallel work derives independent
child streams with `jump_streams` (keyed-hash seed derivation, recorded in
`describe()` for provenance).
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .errors import SourceExhaustedError, ValidationError

_MASK32 = 0xFFFFFFFF


def _canonical_seed_bytes(seed) -> bytes:
    if isinstance(seed, (bytes, bytearray)):
        return bytes(seed)
    if isinstance(seed, int):
        if seed < 0:
            raise ValidationError("integer seeds must be nonnegative")
        length = max(16, (seed.bit_length() + 7) // 8)
        return seed.to_bytes(length, "big")
    if isinstance(seed, str):
        return seed.encode("utf-8")
    raise ValidationError(f"unsupported seed type {type(seed).__name__}")


def root_key(kind: str, seed) -> bytes:
    """32-byte root key for a (kind, seed) pair."""
    return hashlib.blake2b(
        _canonical_seed_bytes(seed), digest_size=32, person=b"tlt-root",
        salt=kind.encode("ascii")[:16],
    ).digest()


def derive_child_key(parent_key: bytes, index: int) -> bytes:
    """Keyed-hash derivation of the index-th child stream key."""
    return hashlib.blake2b(
        index.to_bytes(8, "big"), key=parent_key, digest_size=32,
        person=b"tlt-stream",
    ).digest()


def _expand_key(key: bytes, nbytes: int, purpose: bytes) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < nbytes:
        out += hashlib.blake2b(
            counter.to_bytes(8, "big"), key=key, digest_size=64, person=purpose
        ).digest()
        counter += 1
    return bytes(out[:nbytes])


class BitBlock:
    """A fixed-length bit sequence, packed 8 bits per byte, MSB first."""

    __slots__ = ("packed", "nbits")

    def __init__(self, packed: np.ndarray, nbits: int):
        if nbits < 1:
            raise ValidationError("BitBlock length must be positive")
        if len(packed) != (nbits + 7) // 8:
            raise ValidationError("packed length does not match bit count")
        self.packed = packed
        self.nbits = nbits

    @classmethod
    def from_bits(cls, bits) -> "BitBlock":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(np.packbits(bits), len(bits))

    @classmethod
    def from01(cls, text: str) -> "BitBlock":
        return cls.from_bits([1 if c == "1" else 0 for c in text if c in "01"])

    def bits(self) -> np.ndarray:
        """Unpacked 0/1 array of length nbits."""
        return np.unpackbits(self.packed)[: self.nbits]

    def ones(self) -> int:
        rem = self.nbits % 8
        if rem == 0:
            return int(np.bitwise_count(self.packed).sum())
        head = int(np.bitwise_count(self.packed[:-1]).sum())
        last = int(self.packed[-1]) & ((0xFF << (8 - rem)) & 0xFF)
        return head + last.bit_count()

    def __len__(self) -> int:
        return self.nbits


class BitSource(ABC):
    """Deterministic stream of bits with an absolute bit position."""

    kind: str = "?"

    def __init__(self, seed, derivation: tuple[int, ...] = ()):
        self.seed = seed
        self.derivation = derivation
        self._pos = 0
        self._pending = np.empty(0, dtype=np.uint8)
        self._skip = 0  # bits of _pending[0] already served
        self._limit_bits: int | None = None

    @property
    def position(self) -> int:
        """Bits served so far."""
        return self._pos

    @abstractmethod
    def _produce_bytes(self, nbytes: int) -> np.ndarray:
        """Return at least nbytes fresh stream bytes (uint8 array)."""

    @abstractmethod
    def _child(self, index: int) -> "BitSource":
        """A freshly-seeded child source for stream `index`."""

    def spawn(self, count: int) -> list["BitSource"]:
        if count < 1:
            raise ValidationError("stream count must be >= 1")
        return [self._child(i) for i in range(count)]

    def describe(self) -> dict:
        seed = self.seed
        if isinstance(seed, (bytes, bytearray)):
            seed = bytes(seed).hex()
        return {
            "kind": self.kind,
            "seed": seed,
            "derivation": list(self.derivation),
            "position": self._pos,
        }

    def next_packed(self, nbits: int) -> np.ndarray:
        """The next nbits bits, packed MSB-first (last byte zero-padded)."""
        if nbits < 1:
            raise ValidationError("bit count must be positive")
        if self._limit_bits is not None and self._pos + nbits > self._limit_bits:
            raise SourceExhaustedError(
                f"{self.kind} source has {self._limit_bits - self._pos} bits left, "
                f"{nbits} requested"
            )
        total = self._skip + nbits
        need_bytes = (total + 7) // 8
        if len(self._pending) < need_bytes:
            fresh = self._produce_bytes(need_bytes - len(self._pending))
            self._pending = np.concatenate([self._pending, fresh])
        if self._skip == 0:
            nbytes = (nbits + 7) // 8
            out = self._pending[:nbytes].copy()
            rem = nbits % 8
            if rem:
                out[-1] &= (0xFF << (8 - rem)) & 0xFF
                self._pending = self._pending[nbytes - 1 :]
                self._skip = rem
            else:
                self._pending = self._pending[nbytes:]
        else:
            bits = np.unpackbits(self._pending[:need_bytes])[self._skip : total]
            out = np.packbits(bits)
            consumed = total // 8
            self._pending = self._pending[consumed:]
            self._skip = total % 8
        self._pos += nbits
        return out

    def next_block(self, n: int) -> BitBlock:
        """The next n bits; consecutive calls return disjoint segments."""
        return BitBlock(self.next_packed(n), n)

    def uniforms(self, count: int) -> np.ndarray:
        """count U(0,1) doubles; each consumes 64 bits, MSB-aligned."""
        raw = self.next_packed(count * 64)
        words = raw.view(">u8").astype(np.uint64)
        return (words >> np.uint64(11)) * (2.0 ** -53)


def jump_streams(source: BitSource, count: int) -> list[BitSource]:
    """`count` independent child streams (pairwise non-overlapping output)."""
    return source.spawn(count)


# ----------------------------------------------------------------------
# MT19937
# ----------------------------------------------------------------------

def _mt_init_genrand(seed: int) -> list[int]:
    mt = [0] * 624
    mt[0] = seed & _MASK32
    for i in range(1, 624):
        mt[i] = (1812433253 * (mt[i - 1] ^ (mt[i - 1] >> 30)) + i) & _MASK32
    return mt


def _mt_init_by_array(key: list[int]) -> list[int]:
    mt = _mt_init_genrand(19650218)
    i, j = 1, 0
    for _ in range(max(624, len(key))):
        mt[i] = ((mt[i] ^ ((mt[i - 1] ^ (mt[i - 1] >> 30)) * 1664525)) + key[j] + j) & _MASK32
        i += 1
        j += 1
        if i >= 624:
            mt[0] = mt[623]
            i = 1
        if j >= len(key):
            j = 0
    for _ in range(623):
        mt[i] = ((mt[i] ^ ((mt[i - 1] ^ (mt[i - 1] >> 30)) * 1566083941)) - i) & _MASK32
        i += 1
        if i >= 624:
            mt[0] = mt[623]
            i = 1
    mt[0] = 0x80000000
    return mt


class MT19937Source(BitSource):
    """Mersenne Twister words (numpy's MT19937 core, reference seeding).

    Integer seeds use the classic init_genrand fill; byte seeds and derived
    child streams use init_by_array over the (derived) key words.
    """

    kind = "mt19937"

    def __init__(self, seed=5489, derivation: tuple[int, ...] = (), _key: bytes | None = None):
        super().__init__(seed, derivation)
        self._root = _key if _key is not None else root_key(self.kind, seed)
        if _key is not None or not isinstance(seed, int):
            raw = _key if _key is not None else _canonical_seed_bytes(seed)
            raw = raw + b"\x00" * ((-len(raw)) % 4)
            words = np.frombuffer(raw, dtype=">u4")
            state = _mt_init_by_array([int(w) for w in words])
        else:
            state = _mt_init_genrand(seed)
        self._bg = np.random.MT19937()
        self._bg.state = {
            "bit_generator": "MT19937",
            "state": {"key": np.array(state, dtype=np.uint32), "pos": 624},
        }

    def _produce_bytes(self, nbytes: int) -> np.ndarray:
        nwords = (nbytes + 3) // 4
        return self._bg.random_raw(nwords).astype(">u4").view(np.uint8)

    def next_words(self, count: int) -> np.ndarray:
        """The next count*32 bits as native uint32 words (same stream content
        as next_packed, minus the big-endian byteswap; used by consumers whose
        statistic is byte-order invariant, e.g. popcounts)."""
        if self._skip == 0 and len(self._pending) == 0:
            self._pos += 32 * count
            return self._bg.random_raw(count)
        return self.next_packed(32 * count).view(">u4").astype(np.uint32)

    def _child(self, index: int) -> "MT19937Source":
        key = derive_child_key(self._root, index)
        return MT19937Source(self.seed, self.derivation + (index,), _key=key)


# ----------------------------------------------------------------------
# WELL19937a
# ----------------------------------------------------------------------

_WELL_R = 624
_WELL_M1, _WELL_M2, _WELL_M3 = 70, 179, 449
_WELL_MASKU = 0xFFFFFFFF >> 1      # low 31 bits
_WELL_MASKL = ~_WELL_MASKU & _MASK32


class Well19937aSource(BitSource):
    """WELL19937a words, transcribed from the published reference recurrence."""

    kind = "well19937a"

    def __init__(self, seed=0, derivation: tuple[int, ...] = (), _key: bytes | None = None):
        super().__init__(seed, derivation)
        self._root = _key if _key is not None else root_key(self.kind, seed)
        raw = _expand_key(self._root, _WELL_R * 4, b"tlt-well-init")
        state = [int(w) for w in np.frombuffer(raw, dtype=">u4")]
        if not any(state):
            state[0] = 1  # the all-zero state is a fixed point
        self._state = state
        self._i = 0

    def _next_words(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint32)
        s = self._state
        i = self._i
        m = _MASK32
        for k in range(count):
            z0 = (s[(i + 623) % 624] & _WELL_MASKL) | (s[(i + 622) % 624] & _WELL_MASKU)
            v0 = s[i]
            vm1 = s[(i + _WELL_M1) % 624]
            vm2 = s[(i + _WELL_M2) % 624]
            vm3 = s[(i + _WELL_M3) % 624]
            z1 = (v0 ^ ((v0 << 25) & m)) ^ (vm1 ^ (vm1 >> 27))
            z2 = (vm2 >> 9) ^ (vm3 ^ (vm3 >> 1))
            nv1 = z1 ^ z2
            s[i] = nv1
            nv0 = (
                z0
                ^ (z1 ^ ((z1 << 9) & m))
                ^ (z2 ^ ((z2 << 21) & m))
                ^ (nv1 ^ (nv1 >> 21))
            )
            i = (i + 623) % 624
            s[i] = nv0
            out[k] = nv0
        self._i = i
        return out

    def _produce_bytes(self, nbytes: int) -> np.ndarray:
        nwords = (nbytes + 3) // 4
        return self._next_words(nwords).astype(">u4").view(np.uint8)

    def _child(self, index: int) -> "Well19937aSource":
        key = derive_child_key(self._root, index)
        return Well19937aSource(self.seed, self.derivation + (index,), _key=key)


# ----------------------------------------------------------------------
# SHA-1 G-function generator (the construction bundled with the NIST suite)
# ----------------------------------------------------------------------

_SHA1_IV = (0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0)


def sha1_compress(block: bytes, iv=_SHA1_IV) -> bytes:
    """One SHA-1 compression of a 64-byte block (no length padding)."""
    if len(block) != 64:
        raise ValidationError("SHA-1 compression needs a 64-byte block")
    w = list(np.frombuffer(block, dtype=">u4").astype(np.int64))
    for t in range(16, 80):
        x = (w[t - 3] ^ w[t - 8] ^ w[t - 14] ^ w[t - 16]) & _MASK32
        w.append(((x << 1) | (x >> 31)) & _MASK32)
    a, b, c, d, e = iv
    for t in range(80):
        if t < 20:
            f = (b & c) | (~b & d)
            k = 0x5A827999
        elif t < 40:
            f = b ^ c ^ d
            k = 0x6ED9EBA1
        elif t < 60:
            f = (b & c) | (b & d) | (c & d)
            k = 0x8F1BBCDC
        else:
            f = b ^ c ^ d
            k = 0xCA62C1D6
        tmp = (((a << 5) | (a >> 27)) + f + e + k + int(w[t])) & _MASK32
        a, b, c, d, e = tmp, a, ((b << 30) | (b >> 2)) & _MASK32, c, d
    out = [(x + y) & _MASK32 for x, y in zip((a, b, c, d, e), iv)]
    return b"".join(x.to_bytes(4, "big") for x in out)


class Sha1GSource(BitSource):
    """FIPS-186-style G-function generator: digest = G(IV, XKEY || 0…),
    XKEY ← (XKEY + digest + 1) mod 2^160, digests concatenated as output."""

    kind = "sha1g"

    def __init__(self, seed=0, derivation: tuple[int, ...] = (), _key: bytes | None = None):
        super().__init__(seed, derivation)
        self._root = _key if _key is not None else root_key(self.kind, seed)
        self._xkey = int.from_bytes(
            hashlib.blake2b(self._root, digest_size=20, person=b"tlt-sha1-xkey").digest(),
            "big",
        )

    def _produce_bytes(self, nbytes: int) -> np.ndarray:
        rounds = (nbytes + 19) // 20
        out = bytearray()
        for _ in range(rounds):
            digest = sha1_compress(self._xkey.to_bytes(20, "big") + b"\x00" * 44)
            out += digest
            self._xkey = (self._xkey + int.from_bytes(digest, "big") + 1) % (1 << 160)
        return np.frombuffer(bytes(out), dtype=np.uint8)

    def _child(self, index: int) -> "Sha1GSource":
        key = derive_child_key(self._root, index)
        return Sha1GSource(self.seed, self.derivation + (index,), _key=key)


# ----------------------------------------------------------------------
# Counter-based keystream source (ideal-ish reference generator)
# ----------------------------------------------------------------------

class SplitStreamSource(BitSource):
    """ChaCha20 keystream in counter mode; cheap jumps, near-ideal statistics."""

    kind = "splitstream"

    def __init__(self, seed=0, derivation: tuple[int, ...] = (), _key: bytes | None = None):
        super().__init__(seed, derivation)
        self._root = _key if _key is not None else root_key(self.kind, seed)
        cipher = Cipher(algorithms.ChaCha20(self._root, b"\x00" * 16), mode=None)
        self._enc = cipher.encryptor()

    def _produce_bytes(self, nbytes: int) -> np.ndarray:
        return np.frombuffer(self._enc.update(b"\x00" * nbytes), dtype=np.uint8)

    def _child(self, index: int) -> "SplitStreamSource":
        key = derive_child_key(self._root, index)
        return SplitStreamSource(self.seed, self.derivation + (index,), _key=key)


# ----------------------------------------------------------------------
# File-backed source
# ----------------------------------------------------------------------

def sniff_file_mode(head: bytes) -> str:
    """ascii if the sample is only '0'/'1'/whitespace, else raw."""
    if head and all(b in b"01 \t\r\n" for b in head):
        return "ascii"
    return "raw"


class FileSource(BitSource):
    """Bits from a file: raw bytes MSB-first, or ASCII '0'/'1' (whitespace
    ignored); the mode is sniffed from content unless forced."""

    kind = "file"

    def __init__(self, path, mode: str = "auto"):
        super().__init__(str(path), ())
        with open(path, "rb") as fh:
            data = fh.read()
        if mode == "auto":
            mode = sniff_file_mode(data[:4096])
        if mode == "ascii":
            arr = np.frombuffer(data, dtype=np.uint8)
            digits = arr[(arr == 0x30) | (arr == 0x31)]
            bits = (digits == 0x31).astype(np.uint8)
            self._packed = np.packbits(bits)
            nbits = len(bits)
        elif mode == "raw":
            self._packed = np.frombuffer(data, dtype=np.uint8)
            nbits = 8 * len(self._packed)
        else:
            raise ValidationError(f"unknown file mode {mode!r}")
        self.mode = mode
        self._served_bytes = 0
        self._limit_bits = nbits
        self._window = (0, nbits)

    def _produce_bytes(self, nbytes: int) -> np.ndarray:
        start = self._served_bytes
        if start + nbytes > len(self._packed):
            raise SourceExhaustedError("file source exhausted")
        self._served_bytes = start + nbytes
        return self._packed[start : start + nbytes]

    def _child(self, index: int) -> "FileSource":
        raise ValidationError("file sources are split with spawn(), not _child")

    def spawn(self, count: int) -> list["FileSource"]:
        """Split the remaining bits into `count` contiguous disjoint spans."""
        if count < 1:
            raise ValidationError("stream count must be >= 1")
        lo = self._window[0] + self._pos
        hi = self._window[1]
        span = (hi - lo) // count
        if span == 0:
            raise SourceExhaustedError("not enough bits left to split")
        children = []
        for i in range(count):
            child = object.__new__(FileSource)
            BitSource.__init__(child, self.seed, self.derivation + (i,))
            child.mode = self.mode
            child._packed = self._packed
            start = lo + i * span
            end = hi if i == count - 1 else start + span
            child._window = (start, end)
            child._served_bytes = start // 8
            child._skip = 0
            child._limit_bits = end - start
            if start % 8:
                child._pending = self._packed[start // 8 : start // 8 + 1]
                child._served_bytes = start // 8 + 1
                child._skip = start % 8
            children.append(child)
        return children


_SOURCE_KINDS = {
    "mt19937": MT19937Source,
    "mt": MT19937Source,
    "sha1g": Sha1GSource,
    "sha1": Sha1GSource,
    "well19937a": Well19937aSource,
    "well": Well19937aSource,
    "splitstream": SplitStreamSource,
}


def make_source(kind: str, seed=None, path=None, file_mode: str = "auto") -> BitSource:
    """Factory used by the CLI and tests."""
    kind = kind.lower()
    if kind == "file":
        if path is None:
            raise ValidationError("file sources need a path")
        return FileSource(path, mode=file_mode)
    if kind not in _SOURCE_KINDS:
        raise ValidationError(f"unknown generator kind {kind!r}")
    cls = _SOURCE_KINDS[kind]
    if seed is None:
        seed = 5489 if cls is MT19937Source else 1
    return cls(seed)
