#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the derived scenario fixtures (SD images, the BBL with its
embedded kernel digest, trustlet image, scenario configs).

Usage: gen_fixtures.py [path/to/hectorv]
"""

import hashlib
import json
import os
import struct
import subprocess
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
HECTORV = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "..", "target", "debug", "hectorv")

BLOCK = 512
SD_MAGIC = 0x44535648
TRUSTLET_KEY = "0x5ca1ab1e0ddba115"
TRUSTLET_IV = "0x0f1e2d3c4b5a6978"


def assemble(src):
    with tempfile.TemporaryDirectory() as d:
        out = os.path.join(d, "out.bin")
        subprocess.run([HECTORV, "asm", src, "-o", out, "--format", "bin"], check=True)
        with open(out, "rb") as f:
            return f.read()


def digest_words(data):
    return list(struct.unpack(">8I", hashlib.sha256(data).digest()))


def hex_words(words):
    return ["0x%08x" % w for w in words]


def blocks(n):
    return (n + BLOCK - 1) // BLOCK


def sd_image(bbl, kernel):
    bbl_block = 1
    kernel_block = bbl_block + blocks(len(bbl))
    header = struct.pack("<5I", SD_MAGIC, bbl_block, len(bbl), kernel_block, len(kernel))
    img = bytearray(header.ljust(BLOCK, b"\0"))
    img += bbl.ljust(blocks(len(bbl)) * BLOCK, b"\0")
    img += kernel.ljust(blocks(len(kernel)) * BLOCK, b"\0")
    return img, bbl_block, kernel_block


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def secure_boot():
    d = os.path.join(HERE, "secure_boot")
    kernel = assemble(os.path.join(d, "kernel.s"))
    with open(os.path.join(d, "bbl.s.in")) as f:
        template = f.read()
    with open(os.path.join(d, "bbl.s"), "w") as f:
        f.write("# Generated from bbl.s.in by gen_fixtures.py.\n")
        f.write(template.replace("@KERNEL_DIGEST@", ", ".join(hex_words(digest_words(kernel)))))
    bbl = assemble(os.path.join(d, "bbl.s"))
    img, bbl_block, _ = sd_image(bbl, kernel)
    with open(os.path.join(d, "sd.img"), "wb") as f:
        f.write(img)
    bad = bytearray(img)
    bad[bbl_block * BLOCK + 0x10] ^= 0x01
    with open(os.path.join(d, "sd_tampered.img"), "wb") as f:
        f.write(bad)

    base = {
        "name": "secure-boot",
        "scenario": "secure_boot",
        "max_ticks": 400000,
        "owner": "0x4400",
        "reset": {"ree": True, "rvscp": False},
        "slots": [0],
        "sd_image": "sd.img",
        "preload": [
            {"kind": "asm", "file": "zsbl.s"},
            {"kind": "words", "addr": "0x40040000", "words": hex_words(digest_words(bbl))},
        ],
        "expect": {"uart": "BOOT OK\n", "owner": "0x0400"},
    }
    write_json(os.path.join(d, "secure_boot.json"), base)
    write_json(os.path.join(d, "secure_boot_tampered.json"),
               dict(base, name="secure-boot-tampered", sd_image="sd_tampered.img"))


def trustlet():
    d = os.path.join(HERE, "trustlet")
    subprocess.run([HECTORV, "build-trustlet", os.path.join(d, "echo.s"),
                    "--key", TRUSTLET_KEY, "--iv", TRUSTLET_IV,
                    "--claims", os.path.join(d, "echo_claims.json"),
                    "-o", os.path.join(d, "echo.hvt")], check=True)
    write_json(os.path.join(d, "trustlet.json"), {
        "name": "trustlet",
        "scenario": "trustlet",
        "max_ticks": 400000,
        "owner": "0x0000",
        "reset": {"ree": False, "rvscp": True},
        "slots": [1],
        "preload": [
            {"kind": "asm", "file": "ree.s"},
            {"kind": "trustlet", "file": "echo.hvt", "addr": "0x80100000", "count_prefix": True},
        ],
        "initial": [{"device": "mpu", "allowlist": ["0x0000"], "bind": "0x0000"}],
        "mpu_regions": [{"index": 0, "base": 0x80000000, "length": 0x200000, "allowed": ["0x0000"]}],
        "expect": {"uart": "HELLO\nREE OK\n", "owner": "0x0000"},
    })


if __name__ == "__main__":
    secure_boot()
    trustlet()
