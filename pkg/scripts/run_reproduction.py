#!/usr/bin/env python3
"""Run the full measurement reproduction into ./reproduction_out.

Equivalent to `photonlab reproduce-paper -o reproduction_out`; pass
--quick for the 1/100-events variant.
"""

import sys

from photonlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce-paper", "-o", "reproduction_out", *sys.argv[1:]]))
