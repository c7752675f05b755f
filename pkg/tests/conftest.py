import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def mutag_dir() -> Path | None:
    """Directory holding MUTAG_*.txt files, if the user has provided it."""
    candidates = []
    env = os.environ.get("SGMI_DATA_DIR")
    if env:
        candidates.append(Path(env) / "MUTAG")
        candidates.append(Path(env))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "MUTAG")
    for cand in candidates:
        if (cand / "MUTAG_A.txt").is_file():
            return cand
    return None


@pytest.fixture(scope="session")
def mutag_path():
    path = mutag_dir()
    if path is None:
        pytest.skip(
            "MUTAG dataset not found: place the TUDataset text files under data/MUTAG/ "
            "or set SGMI_DATA_DIR (see README for the download instructions)"
        )
    return path
