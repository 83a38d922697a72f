import sys
from pathlib import Path

# lets test modules share fixtures and oracles with plain imports
sys.path.insert(0, str(Path(__file__).parent))
