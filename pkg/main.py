"""
Launcher for the narmax-vmp command line from the repository root.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "narmax_vmp"))

from main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
