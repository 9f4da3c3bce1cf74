"""Bundled model and experiment documents."""
from importlib import resources
from pathlib import Path


def data_path(name: str) -> Path:
    """Filesystem path of a bundled data file (tmaze.json, fig2.json)."""
    return Path(resources.files(__package__) / name)
