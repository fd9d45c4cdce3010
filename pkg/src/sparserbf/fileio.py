"""Atomic text-file output shared by the dump writers and the CLI."""

from __future__ import annotations

import os
import tempfile


def atomic_write_text(path, text: str):
    """Write via a temp file in the target directory plus rename, so an
    interrupted run never leaves a truncated file behind."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
