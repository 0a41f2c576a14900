"""Registry and fetcher for the Sociopatterns-style contact datasets.

Upstream hosting moves around, so the registry is data: a JSON file can
override any URL. Fetching degrades gracefully; analyses that need a
dataset should treat an absent file as "skip", not as failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .exceptions import DataError

__all__ = ["DatasetDescriptor", "default_registry", "load_registry", "fetch_dataset",
           "default_cache_dir", "dataset_path"]

_BASE = "http://www.sociopatterns.org/wp-content/uploads"


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    url: str
    format: str = "contact-log"
    checksum: Optional[str] = None  # sha256 hex digest
    notes: str = ""

    def filename(self) -> str:
        tail = self.url.rstrip("/").rsplit("/", 1)[-1] or f"{self.name}.dat"
        return f"{self.name}__{tail}"


def default_registry() -> dict:
    """Descriptors for the twelve benchmark contact datasets.

    URLs point at the canonical Sociopatterns uploads and may need an
    override file when upstream paths change.
    """
    entries = [
        ("HS13", f"{_BASE}/2015/07/High-School_data_2013.csv.gz", "high school 2013"),
        ("SFHH", f"{_BASE}/2018/12/tij_SFHH.dat_.gz", "SFHH conference"),
        ("HS12", f"{_BASE}/2015/07/highschool_2012.csv.gz", "high school 2012"),
        ("WP", f"{_BASE}/2016/06/tij_InVS.dat_.gz", "workplace 2013"),
        ("WP15", f"{_BASE}/2018/12/tij_InVS15.dat_.gz", "workplace 2015"),
        ("HS11", f"{_BASE}/2015/07/highschool_2011.csv.gz", "high school 2011"),
        ("Thiers11", f"{_BASE}/2015/07/highschool_2011.csv.gz", "high school 2011 (alias)"),
        ("LyonSchool", f"{_BASE}/2015/09/primaryschool.csv.gz", "primary school"),
        ("HT09", f"{_BASE}/2011/07/ht09_contact_list.dat.gz", "Hypertext 2009"),
        ("HO", f"{_BASE}/2013/09/detailed_list_of_contacts_Hospital.dat_.gz", "hospital ward"),
        ("KH", f"{_BASE}/2019/06/scc2034_kilifi_all_contacts_across_households.csv.gz",
         "Kilifi households"),
        ("BB", f"{_BASE}/2020/09/RFID_data.txt_.gz", "baboon proximity"),
    ]
    return {name: DatasetDescriptor(name=name, url=url, notes=notes)
            for name, url, notes in entries}


def load_registry(path) -> dict:
    """Registry from a JSON file {name: {url, format?, checksum?, notes?}}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    registry = {}
    for name, entry in raw.items():
        if "url" not in entry:
            raise DataError(f"registry entry {name!r} lacks a url")
        registry[name] = DatasetDescriptor(
            name=name,
            url=entry["url"],
            format=entry.get("format", "contact-log"),
            checksum=entry.get("checksum"),
            notes=entry.get("notes", ""),
        )
    return registry


def default_cache_dir() -> Path:
    env = os.environ.get("ZIPNETS_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "zipnets"


def dataset_path(descriptor: DatasetDescriptor, cache_dir=None) -> Path:
    cache = Path(cache_dir) if cache_dir else default_cache_dir()
    return cache / descriptor.filename()


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def fetch_dataset(descriptor: DatasetDescriptor, cache_dir=None, timeout: float = 60.0) -> Path:
    """Return the local path of a dataset, downloading on a cache miss.

    A cached file with a matching checksum (or no recorded checksum) is
    returned without touching the network. Downloads are atomic;
    checksum mismatches discard the file and raise.
    """
    target = dataset_path(descriptor, cache_dir)
    if target.exists():
        if descriptor.checksum and _sha256(target) != descriptor.checksum:
            target.unlink()
            raise DataError(f"cached {descriptor.name} failed its checksum; file removed")
        return target
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".part")
    try:
        with urllib.request.urlopen(descriptor.url, timeout=timeout) as resp, open(tmp, "wb") as out:
            out.write(resp.read())
    except urllib.error.HTTPError as exc:
        raise DataError(f"fetching {descriptor.name} from {descriptor.url} failed: HTTP {exc.code}") from exc
    except (urllib.error.URLError, OSError) as exc:
        raise DataError(f"fetching {descriptor.name} from {descriptor.url} failed: {exc}") from exc
    if descriptor.checksum and _sha256(tmp) != descriptor.checksum:
        tmp.unlink()
        raise DataError(f"download of {descriptor.name} failed its checksum; file discarded")
    tmp.replace(target)
    return target
