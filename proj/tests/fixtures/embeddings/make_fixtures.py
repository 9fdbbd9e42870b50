"""Writes the embedding fixtures with an independent struct-based writer.

three_sentences.tgemb mimics an exporter run over three messages (dim 6).
hash_embed_ref.tsv freezes hash_embed outputs computed here in pure Python.
"""
import json
import math
import struct
from pathlib import Path

HERE = Path(__file__).parent


def write_tgemb(path, dim, provenance, records):
    with open(path, "wb") as f:
        f.write(b"TGEMB1\n")
        f.write(json.dumps({"dim": dim, "count": len(records), "provenance": provenance}).encode() + b"\n")
        for mid, vec in records:
            raw = mid.encode("utf-8")
            f.write(struct.pack(">H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<%df" % dim, *vec))


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def hash_embed(text, dim):
    s = "\x02\x02" + text.lower() + "\x03\x03"
    acc = [0.0] * dim
    for i in range(len(s) - 2):
        h = fnv1a64(s[i:i + 3].encode("utf-8"))
        acc[h % dim] += -1.0 if h >> 63 else 1.0
    n = math.sqrt(sum(x * x for x in acc))
    return [x / n for x in acc]


if __name__ == "__main__":
    write_tgemb(HERE / "three_sentences.tgemb", 6, "exporter:fixture-encoder", [
        ("chan:1", [0.5, -0.25, 0.125, 1.0, 0.0, -2.0]),
        ("chan:2", [1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3]),
        ("канал:17", [-1.5, 1.5, -1.5, 1.5, -1.5, 1.5]),
    ])
    texts = ["hello", "Привет, мир!", "", "Зеленский коррупция 😀", "aaaa"]
    with open(HERE / "hash_embed_ref.tsv", "w", encoding="utf-8") as f:
        for t in texts:
            v = hash_embed(t, 16)
            f.write(json.dumps(t, ensure_ascii=False) + "\t" + " ".join(repr(x) for x in v) + "\n")
