"""Rewrites a current bundle into the legacy fixtures used by the format tests.

    python3 legacy_bundles.py toy/toy.bundle
"""
import hashlib
import json
import struct
import sys

src = open(sys.argv[1], "rb").read()
body = src[:-32]
assert body[:8] == b"KDBUNDLE"
n = struct.unpack_from("<Q", body, 12)[0]
manifest = json.loads(body[20:20 + n])
blobs = body[20 + n:]


def write(path, major, minor, m):
    head = json.dumps(m, separators=(",", ":")).encode()
    out = b"KDBUNDLE" + struct.pack("<HHQ", major, minor, len(head)) + head + blobs
    open(path, "wb").write(out + hashlib.sha256(out).digest())


v10 = dict(manifest)
v10.pop("cache", None)
v10["tables"] = [{k: v for k, v in t.items() if k != "key_dist"} for t in manifest["tables"]]
write("toy/toy_v1_0.bundle", 1, 0, v10)
write("toy/toy_v0_9.bundle", 0, 9, v10)
