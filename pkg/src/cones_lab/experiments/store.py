"""Content-addressed artifact store with integrity manifests.

Each artifact lives in <root>/<kind>/<key> where key is the 12-hex hash of
the configuration subset that determines it.  A sealed directory carries a
manifest listing the sha256 of every file, so a reused artifact is either
bit-exact or refuses to load.
"""

import hashlib
import json
import os
from pathlib import Path

from ..errors import IntegrityError

MANIFEST = "artifact.json"


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _walk_files(adir: Path):
    for base, _, names in sorted(os.walk(adir)):
        for name in sorted(names):
            path = Path(base) / name
            rel = path.relative_to(adir).as_posix()
            if rel != MANIFEST:
                yield rel, path


class ArtifactStore:
    def __init__(self, root):
        self.root = Path(root)

    def dir(self, kind: str, key: str) -> Path:
        return self.root / kind / key

    def prepare(self, kind: str, key: str, config: dict) -> Path:
        """Create (or reopen) an artifact directory, embedding the full
        resolved config snapshot that produced it."""
        adir = self.dir(kind, key)
        adir.mkdir(parents=True, exist_ok=True)
        (adir / "config.json").write_text(
            json.dumps(config, indent=1, sort_keys=True))
        return adir

    def seal(self, adir) -> dict:
        adir = Path(adir)
        manifest = {"key": adir.name,
                    "files": {rel: _file_sha256(p) for rel, p in _walk_files(adir)}}
        (adir / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return manifest

    def is_sealed(self, kind: str, key: str) -> bool:
        return (self.dir(kind, key) / MANIFEST).exists()

    def open(self, kind: str, key: str) -> Path:
        """Verify every sealed byte before handing the directory out."""
        adir = self.dir(kind, key)
        manifest_path = adir / MANIFEST
        if not adir.exists():
            raise IntegrityError(f"{adir}: artifact directory does not exist")
        if not manifest_path.exists():
            raise IntegrityError(f"{adir}: missing integrity manifest {MANIFEST}")
        manifest = json.loads(manifest_path.read_text())
        recorded = manifest.get("files", {})
        present = dict(_walk_files(adir))
        for rel in recorded:
            if rel not in present:
                raise IntegrityError(f"{adir}: recorded file {rel!r} is missing")
            digest = _file_sha256(present[rel])
            if digest != recorded[rel]:
                raise IntegrityError(
                    f"{adir}/{rel}: content hash {digest[:12]} does not match "
                    f"the manifest ({recorded[rel][:12]})")
        extra = set(present) - set(recorded)
        if extra:
            raise IntegrityError(
                f"{adir}: unrecorded files present: {sorted(extra)}")
        return adir
