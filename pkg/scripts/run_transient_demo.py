#!/usr/bin/env python3
"""Synthetic transient demo: window-trained readout of a later time step."""

import pathlib
import sys

from podreadout.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent
CFG = str(HERE / "configs" / "transient_case1.json")

if __name__ == "__main__":
    for command in (["offline"], ["sweep"], ["param-study"]):
        code = main(["--config", CFG, "-v", *command])
        if code != 0:
            sys.exit(code)
    print("done; see out/transient_case1/")
