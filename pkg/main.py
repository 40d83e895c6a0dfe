import sys

from mdrq.cli import cli_main

if __name__ == '__main__':
    sys.exit(cli_main(sys.argv[1:] or ["verify", "--n", "10000", "--dims", "5", "--count", "200"]))
