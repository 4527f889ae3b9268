"""Frequently called paths."""

import os

root_path = os.path.dirname(
    os.path.dirname(
        os.path.dirname(__file__)
    )
)

configs_dir = os.path.join(root_path, 'configs')


def atomic_target(path: str) -> str:
    """Temporary sibling of `path`, later moved in place with `os.replace`."""
    directory, name = os.path.split(os.path.abspath(path))
    return os.path.join(directory, f".{name}.{os.getpid()}.tmp")
