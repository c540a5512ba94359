"""
main.py: entry point for ProxScale.
Run: python main.py {chain,sweep,diagnose} --config <file.toml> [--out DIR] [--seed N] [--jobs N]
"""
import sys

from cli.app import main

if __name__ == "__main__":
    sys.exit(main())
