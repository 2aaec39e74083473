import sys
from pathlib import Path

# run against the in-tree sources even when the package is not installed
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))
