"""
SABR Series Lab - command-line entry point.

    python main.py price --atm --sigma0 0.3 --T 0.1:0.1:1.0
"""
import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
