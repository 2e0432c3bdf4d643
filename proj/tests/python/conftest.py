import os
import pathlib

import pytest

SOURCE = pathlib.Path(os.environ.get("FOS_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))


@pytest.fixture
def source():
    return SOURCE


@pytest.fixture
def shell_file():
    return SOURCE / "repo" / "shells" / "ultra96.json"


@pytest.fixture
def repo_dir():
    return SOURCE / "repo"
