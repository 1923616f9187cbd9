#!/usr/bin/env python3
"""
Phase-Shifted Bell State QKD Simulator - Launcher
Run the qkdsim command line from a source checkout
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app.cli.main import main

if __name__ == "__main__":
    main()
