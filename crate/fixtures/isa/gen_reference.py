#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates reference.txt by assembling each line with clang's RV32
assembler and reading the words back from the object file."""
import struct
import subprocess
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).parent
LINES = [l for l in (HERE / "reference.s").read_text().splitlines() if l.strip()]


def text_words(obj):
    d = obj.read_bytes()
    shoff = struct.unpack_from("<I", d, 0x20)[0]
    entsize, num, strndx = struct.unpack_from("<HHH", d, 0x2E)
    secs = [struct.unpack_from("<10I", d, shoff + i * entsize) for i in range(num)]
    strtab = secs[strndx]

    def name(off):
        s = d[strtab[4] + off:]
        return s[: s.index(b"\0")].decode()

    for s in secs:
        if name(s[0]) == ".text":
            t = d[s[4]: s[4] + s[5]]
            return struct.unpack("<%dI" % (len(t) // 4), t)
    sys.exit("no .text")


with tempfile.TemporaryDirectory() as tmp:
    src = Path(tmp) / "r.s"
    obj = Path(tmp) / "r.o"
    src.write_text("\n".join(LINES) + "\n")
    subprocess.run(["clang", "--target=riscv32", "-march=rv32i", "-c", str(src), "-o", str(obj)], check=True)
    words = text_words(obj)

assert len(words) == len(LINES)
with open(HERE / "reference.txt", "w") as f:
    for w, l in zip(words, LINES):
        f.write(f"{w:08x}\t{l}\n")
