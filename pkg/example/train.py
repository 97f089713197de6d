# /// script
# dependencies = [
#   "advsl~=0.1.0"
# ]
# ///

import sys

from advsl.cli import main

if __name__ == "__main__":
    # A single configuration file names data, model and output directory.
    sys.exit(main(["train", "--config", sys.argv[1]]))
