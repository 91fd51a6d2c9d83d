"""Write the dephasing-rate sweep over drive amplitude and thermal occupation to CSV."""
import argparse
import sys

from qdelim import cli


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fig1_sweep.csv")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    return cli.run(["sweep", "--set", "sweep.preset=fig1", "--format", "csv", "--out", args.out, "--workers", str(args.workers)])


if __name__ == "__main__":
    sys.exit(main())
