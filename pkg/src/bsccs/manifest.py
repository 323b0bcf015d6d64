"""Plain-text run manifests: one ``key=value`` per line.

A manifest records the exact argument vector, the resolved configuration,
SHA-256 digests of every input file, per-phase wall times and a convergence
summary. Replaying the stored argument vector against inputs with the same
digests regenerates the run's output files.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from contextlib import contextmanager
from os import PathLike
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.txt"


def file_digest(path: str | PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Ordered key/value record of one command invocation."""

    def __init__(self, command: str, argv: list[str]):
        self.entries: dict[str, str] = {}
        self.set("command", command)
        self.set("argv", json.dumps(list(argv)))
        self.set("version", __version__)
        self.set("python", platform.python_version())

    def set(self, key: str, value) -> None:
        text = value if isinstance(value, str) else repr(value)
        if "\n" in text or "=" in key:
            raise ValueError(f"manifest entry {key!r} cannot be written on one line")
        self.entries[key] = text

    def update(self, prefix: str, values: dict) -> None:
        for k, v in values.items():
            self.set(f"{prefix}.{k}", v)

    def add_input(self, role: str, path: str | PathLike) -> None:
        self.set(f"input.{role}.path", str(path))
        self.set(f"input.{role}.sha256", file_digest(path))

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.set(f"time.{name}_seconds", f"{time.perf_counter() - t0:.6f}")

    def format(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.entries.items())

    def write(self, directory: str | PathLike) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_text(self.format(), encoding="utf-8")
        return path


def read_manifest(path: str | PathLike) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            entries[key] = value
    if "argv" not in entries:
        raise ValueError(f"{path}: no argv entry")
    return entries


def stale_inputs(entries: dict[str, str]) -> list[str]:
    """Recorded inputs whose current digest differs from the manifest (or that are gone)."""
    stale = []
    for key, path in entries.items():
        if not (key.startswith("input.") and key.endswith(".path")):
            continue
        expected = entries.get(key[:-len(".path")] + ".sha256")
        try:
            if file_digest(path) != expected:
                stale.append(path)
        except OSError:
            stale.append(path)
    return stale
