"""Province lookup by coordinates and the per-province Geo-LM store."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .ngram import NGramModel

# dialect region -> member provinces; every other province falls in region 10
DIALECT_REGIONS = {
    1: ("Zhejiang", "Jiangsu"),
    2: ("Sichuan", "Chongqing", "Guizhou"),
    3: ("Shandong", "Henan"),
    4: ("Heilongjiang", "Jilin", "Liaoning"),
    5: ("Guangdong",),
    6: ("Shanxi", "Gansu", "Shaanxi"),
    7: ("Hunan", "Hubei", "Anhui"),
    8: ("Yunnan", "Guangxi", "Fujian"),
    9: ("Beijing", "Tianjin", "Hebei"),
}
OTHERS_REGION = 10
NUM_PROVINCES = 34
LEVELS = ("word", "char")


def dialect_region(name: str) -> int:
    for region, members in DIALECT_REGIONS.items():
        if name in members:
            return region
    return OTHERS_REGION


def point_in_ring(lat: float, lon: float, ring) -> bool:
    """Even-odd ray casting; ``ring`` is a sequence of (lat, lon) vertices."""
    inside = False
    n = len(ring)
    y0, x0 = ring[-1]
    for i in range(n):
        y1, x1 = ring[i]
        if (y1 > lat) != (y0 > lat):
            x = x1 + (lat - y1) * (x0 - x1) / (y0 - y1)
            if lon < x:
                inside = not inside
        y0, x0 = y1, x1
    return inside


@dataclass(frozen=True)
class Province:
    id: int
    name: str
    region: int
    polygons: tuple
    capital: tuple | None = None
    bbox: tuple = field(default=(), compare=False)

    def contains(self, lat: float, lon: float) -> bool:
        lat0, lon0, lat1, lon1 = self.bbox
        if not (lat0 <= lat <= lat1 and lon0 <= lon <= lon1):
            return False
        return any(point_in_ring(lat, lon, ring) for ring in self.polygons)


def _province(rec) -> Province:
    polys = tuple(tuple((float(a), float(b)) for a, b in ring) for ring in rec["polygons"])
    lats = [p[0] for r in polys for p in r] or [0.0]
    lons = [p[1] for r in polys for p in r] or [0.0]
    cap = tuple(rec["capital"]) if rec.get("capital") else None
    return Province(int(rec["id"]), rec["name"], int(rec["region"]), polys, cap,
                    (min(lats), min(lons), max(lats), max(lons)))


class ProvinceTable:
    """The 34 provinces with polygons and dialect regions, plus a fallback entry
    returned for coordinates outside every polygon."""

    def __init__(self, provinces, fallback: Province):
        self.provinces = sorted(provinces, key=lambda p: p.id)
        self.fallback = fallback
        self._by_id = {p.id: p for p in self.provinces}
        self._by_id[fallback.id] = fallback
        self._by_name = {p.name: p for p in self.provinces}
        for p in self.provinces:
            if not 1 <= p.region <= 10:
                raise ValueError(f"province {p.name} has region {p.region} outside 1..10")

    @classmethod
    def load(cls, path=None) -> "ProvinceTable":
        if path is None:
            text = resources.files("geodecode").joinpath("data/provinces.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text)
        fb = data.get("fallback", {"id": 0, "name": "Unknown", "region": OTHERS_REGION})
        fallback = Province(int(fb["id"]), fb["name"], int(fb["region"]), (), None, (0, 0, 0, 0))
        return cls([_province(r) for r in data["provinces"]], fallback)

    def __len__(self) -> int:
        return len(self.provinces)

    def __getitem__(self, pid: int) -> Province:
        try:
            return self._by_id[pid]
        except KeyError:
            raise KeyError(f"unknown province id {pid}") from None

    def by_name(self, name: str) -> Province:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown province {name!r}") from None

    def __contains__(self, pid) -> bool:
        return pid in self._by_id

    def ids(self) -> list[int]:
        return [p.id for p in self.provinces]

    def resolve(self, lat: float, lon: float) -> tuple[int, int]:
        """(province id, dialect region) of the first province containing the point."""
        for p in self.provinces:
            if p.contains(lat, lon):
                return p.id, p.region
        return self.fallback.id, self.fallback.region


_default_table = None


def default_table() -> ProvinceTable:
    global _default_table
    if _default_table is None:
        _default_table = ProvinceTable.load()
    return _default_table


def resolve(lat: float, lon: float, table: ProvinceTable | None = None) -> tuple[int, int]:
    return (table or default_table()).resolve(lat, lon)


class GeoLmStore:
    """Province id -> word- and character-level Geo-LMs, loaded on first use.

    Entries can be file paths (ARPA) or already built models. Loading is
    serialized per province and happens at most once.
    """

    def __init__(self, entries: dict | None = None):
        self._entries: dict[int, dict] = {}
        self._models: dict[tuple[int, str], NGramModel] = {}
        self._locks: dict[int, threading.Lock] = {}
        self._guard = threading.Lock()
        self.loads = 0
        for pid, levels in (entries or {}).items():
            self.register(int(pid), **levels)

    def register(self, pid: int, word, char) -> None:
        self._entries[pid] = {"word": word, "char": char}
        for level in LEVELS:
            self._models.pop((pid, level), None)
            if isinstance(self._entries[pid][level], NGramModel):
                self._models[(pid, level)] = self._entries[pid][level]

    @classmethod
    def from_manifest(cls, path) -> "GeoLmStore":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        entries = {int(pid): {lvl: str((path.parent / p).resolve()) for lvl, p in v.items()}
                   for pid, v in data.items()}
        return cls(entries)

    def write_manifest(self, path) -> None:
        path = Path(path)
        out = {}
        for pid, levels in sorted(self._entries.items()):
            if any(isinstance(v, NGramModel) for v in levels.values()):
                raise ValueError(f"province {pid} holds in-memory models; save them first")
            out[str(pid)] = {lvl: str(v) for lvl, v in levels.items()}
        path.write_text(json.dumps(out, indent=1), encoding="utf-8")

    def __contains__(self, pid) -> bool:
        return pid in self._entries

    def provinces(self) -> list[int]:
        return sorted(self._entries)

    def select(self, pid: int, level: str = "word") -> NGramModel:
        if level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
        if pid not in self._entries:
            raise KeyError(f"no Geo-LM registered for province id {pid}")
        model = self._models.get((pid, level))
        if model is not None:
            return model
        with self._guard:
            lock = self._locks.setdefault(pid, threading.Lock())
        with lock:
            model = self._models.get((pid, level))
            if model is None:
                src = self._entries[pid][level]
                try:
                    model = NGramModel.load(src)
                except OSError as e:
                    raise OSError(f"cannot read {level} Geo-LM for province {pid}: {e}") from e
                self._models[(pid, level)] = model
                self.loads += 1
        return model


def select_geo_lm(store: GeoLmStore, pid: int, level: str = "word") -> NGramModel:
    return store.select(pid, level)
