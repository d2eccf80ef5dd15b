"""Offline place-name resolution from a bundled gazetteer."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import GeocodeMissError


@dataclass(frozen=True)
class Place:
    name: str
    lat: float
    lon: float
    country: str


class Gazetteer:
    """Case-insensitive place lookup with alias support."""

    def __init__(self, places: list[Place], aliases: dict[str, str]):
        self._places = {p.name.casefold(): p for p in places}
        self._aliases = {a.casefold(): t for a, t in aliases.items()}
        for alias, target in self._aliases.items():
            if target.casefold() not in self._places:
                raise ValueError(f"alias {alias!r} points at unknown place {target!r}")

    def __len__(self) -> int:
        return len(self._places)

    @property
    def place_names(self) -> list[str]:
        return sorted(p.name for p in self._places.values())

    def resolve(self, name: str) -> Place:
        key = name.strip().casefold()
        if key in self._aliases:
            key = self._aliases[key].casefold()
        try:
            return self._places[key]
        except KeyError:
            raise GeocodeMissError(f"unknown place: {name!r}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "Gazetteer":
        raw = json.loads(Path(path).read_text())
        places = [Place(**p) for p in raw["places"]]
        return cls(places, raw.get("aliases", {}))

    @classmethod
    def bundled(cls) -> "Gazetteer":
        raw = json.loads(
            resources.files("forewarn").joinpath("data/gazetteer.json").read_text()
        )
        places = [Place(**p) for p in raw["places"]]
        return cls(places, raw.get("aliases", {}))


def geocode(name: str, gazetteer: Gazetteer) -> Place:
    """Resolve a place name or alias; raises geocode-miss when unknown."""
    return gazetteer.resolve(name)
