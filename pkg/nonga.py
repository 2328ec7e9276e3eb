"""
nonga launcher.

Usage:
    python nonga.py doublewell --filter enkf-sis --seed 3
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
