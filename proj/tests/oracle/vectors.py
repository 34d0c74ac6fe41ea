#!/usr/bin/env python3
"""Independent reference encoder for the golden vectors in the C++ tests.

Written from the documented byte layouts only; run it and compare with the
constants frozen in tests/test_golden.cpp.
"""
import hashlib
import struct

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives import serialization

B58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"


def b58(data: bytes) -> str:
    n = int.from_bytes(data, "big")
    out = ""
    while n:
        n, r = divmod(n, 58)
        out = B58[r] + out
    pad = len(data) - len(data.lstrip(b"\0"))
    return "1" * pad + out


def H(b: bytes) -> bytes:
    return hashlib.sha256(b).digest()


def cid_bin(data: bytes) -> bytes:
    return b"\x12\x20" + H(data)


def cid_text(data: bytes) -> str:
    return b58(cid_bin(data))


def leaf(data: bytes) -> bytes:
    return b"\x00" + struct.pack(">I", len(data)) + data


def interior(links) -> bytes:
    out = b"\x01" + struct.pack(">I", len(links))
    for cid, size in links:
        out += cid + struct.pack(">Q", size)
    return out


def add_file(data: bytes, chunk: int, max_links: int) -> str:
    chunks = [data[i:i + chunk] for i in range(0, len(data), chunk)] or [b""]
    level = [(cid_bin(leaf(c)), len(c)) for c in chunks]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), max_links):
            group = level[i:i + max_links]
            nxt.append((cid_bin(interior(group)), sum(s for _, s in group)))
        level = nxt
    return b58(level[0][0])


def str16(s: bytes) -> bytes:
    return struct.pack(">H", len(s)) + s


def entry(file_cid, created, accessed, size, ftype, author, modified=None) -> bytes:
    out = file_cid + struct.pack(">QQQ", created, accessed, size) + str16(ftype) + str16(author)
    out += b"\x01" + modified if modified else b"\x00"
    return out


def merkle(hashes):
    level = list(hashes)
    while True:
        if len(level) % 2:
            level.append(level[-1])
        level = [H(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        if len(level) == 1:
            return level[0]


def frame(msg_type, request_id, sender, addr, body):
    rest = bytes([msg_type]) + struct.pack(">Q", request_id) + sender + str16(addr) + body
    return struct.pack(">I", len(rest)) + rest


def main():
    print("sha256('')      ", H(b"").hex())
    print("cid('')         ", cid_text(b""))
    print("cid(hello world)", cid_text(b"hello world"))
    print("zero-digest cid ", b58(b"\x12\x20" + bytes(32)))
    print("leaf('') cid    ", cid_text(leaf(b"")))
    l1, l2 = leaf(b"ab"), leaf(b"cde")
    two = interior([(cid_bin(l1), 2), (cid_bin(l2), 3)])
    print("interior2 hex   ", two.hex())
    print("interior2 cid   ", cid_text(two))
    print("add abcdefghij c4 m2", add_file(b"abcdefghij", 4, 2))
    print("add 262145 x 'a'", add_file(b"a" * 262145, 262144, 174))

    e = entry(cid_bin(b"hello world"), 1528761600, 1528765200, 11, b"text/plain", b"alice")
    print("entry hex       ", e.hex())
    print("entry hash      ", H(e).hex())
    em = entry(cid_bin(b"hello world"), 1528761600, 1528765200, 12, b"text/plain", b"alice",
               cid_bin(b"hello world!"))
    print("mod entry hash  ", H(em).hex())
    hs = [H(bytes([i])) for i in range(3)]
    print("merkle3         ", merkle(hs).hex())
    print("merkle1         ", merkle(hs[:1]).hex())
    root = merkle([H(e)])
    header = bytes(32) + root + struct.pack(">QQ", 1528761600, 42)
    print("header hash     ", H(header).hex())

    seed = bytes(range(1, 33))
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    name_key = H(pk)
    signing = name_key + cid_bin(b"hello world") + struct.pack(">QQ", 3, 1700000000)
    sig = sk.sign(signing)
    print("pubkey          ", pk.hex())
    print("node id         ", b58(name_key))
    print("record hex      ", (signing + pk + sig).hex())

    sender = bytes([0xAB]) * 32
    print("ping frame      ", frame(0x01, 7, sender, b"sim:1", b"").hex())
    print("find_node frame ", frame(0x03, 8, sender, b"sim:1", bytes(31) + b"\x01").hex())
    print("want frame      ", frame(0x20, 9, sender, b"sim:1", struct.pack(">H", 1) + cid_bin(b"")).hex())
    print("get_chain frame ", frame(0x32, 10, sender, b"sim:1", struct.pack(">Q", 5)).hex())


if __name__ == "__main__":
    main()
