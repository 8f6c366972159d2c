"""Regenerate src/geodecode/data/provinces.json.

Province shapes are unions of Voronoi cells around a few real city
coordinates per province, clipped to a coarse outline of China. They are
deliberately simplified: disjoint by construction, and every listed city
lies inside its own province.
"""
import json
from pathlib import Path

import numpy as np
from scipy.spatial import Voronoi
from shapely.geometry import MultiPolygon, Polygon
from shapely.ops import unary_union

# (name, dialect region, [(lat, lon), ...]); first point is the capital
PROVINCES = [
    ("Beijing", 9, [(39.90, 116.40)]),
    ("Tianjin", 9, [(39.13, 117.20)]),
    ("Hebei", 9, [(38.04, 114.51), (40.77, 114.88), (36.60, 114.49), (40.95, 117.96), (39.63, 118.18)]),
    ("Shanxi", 6, [(37.87, 112.55), (40.08, 113.30), (35.03, 111.00)]),
    ("Inner Mongolia", 10, [(40.84, 111.75), (49.21, 119.77), (40.66, 109.84), (42.26, 118.89), (41.0, 101.0), (43.65, 111.97)]),
    ("Liaoning", 4, [(41.80, 123.43), (38.91, 121.61), (40.00, 124.35)]),
    ("Jilin", 4, [(43.82, 125.32), (42.90, 129.50), (45.60, 122.80)]),
    ("Heilongjiang", 4, [(45.80, 126.53), (47.35, 123.92), (50.25, 127.50), (46.80, 130.30)]),
    ("Shanghai", 10, [(31.23, 121.47)]),
    ("Jiangsu", 1, [(32.06, 118.80), (34.26, 117.18), (33.35, 120.16)]),
    ("Zhejiang", 1, [(30.27, 120.16), (28.00, 120.67), (29.87, 121.55)]),
    ("Anhui", 7, [(31.82, 117.23), (32.89, 115.81), (30.53, 117.05)]),
    ("Fujian", 8, [(26.07, 119.30), (24.48, 118.09)]),
    ("Jiangxi", 10, [(28.68, 115.86), (25.83, 114.93)]),
    ("Shandong", 3, [(36.65, 117.12), (36.07, 120.38), (35.10, 118.36)]),
    ("Henan", 3, [(34.75, 113.62), (34.62, 112.45), (32.13, 114.07)]),
    ("Hubei", 7, [(30.59, 114.31), (30.69, 111.29)]),
    ("Hunan", 7, [(28.23, 112.94), (27.55, 110.00)]),
    ("Guangdong", 5, [(23.13, 113.26), (23.35, 116.68), (21.27, 110.36), (24.80, 113.60)]),
    ("Guangxi", 8, [(22.82, 108.32), (25.27, 110.29)]),
    ("Hainan", 10, [(20.04, 110.20), (18.25, 109.50)]),
    ("Chongqing", 2, [(29.56, 106.55), (30.80, 108.40)]),
    ("Sichuan", 2, [(30.57, 104.07), (27.90, 102.26), (31.60, 100.00)]),
    ("Guizhou", 2, [(26.65, 106.63), (27.70, 106.90)]),
    ("Yunnan", 8, [(25.04, 102.71), (25.60, 100.27), (22.00, 100.80)]),
    ("Xizang", 10, [(29.65, 91.11), (32.50, 80.10), (31.48, 92.05)]),
    ("Shaanxi", 6, [(34.34, 108.94), (38.29, 109.73), (33.07, 107.02)]),
    ("Gansu", 6, [(36.06, 103.83), (39.73, 98.49), (34.58, 105.72)]),
    ("Qinghai", 10, [(36.62, 101.78), (36.41, 94.90), (33.00, 97.00)]),
    ("Ningxia", 10, [(38.49, 106.23), (36.00, 106.28)]),
    ("Xinjiang", 10, [(43.83, 87.62), (39.47, 75.99), (37.11, 79.93), (46.0, 85.0)]),
    ("Taiwan", 10, [(25.03, 121.57), (22.63, 120.30)]),
    ("Hong Kong", 10, [(22.32, 114.17)]),
    ("Macau", 10, [(22.20, 113.54)]),
]

# coarse outline, (lon, lat)
OUTLINE = [
    (73.5, 39.5), (75, 37), (78.5, 35.5), (79, 32.5), (81, 30), (86, 27.9), (89, 27.2),
    (92, 26.8), (97.5, 28.2), (98.5, 24.5), (97.5, 23.8), (99, 22), (101.5, 21.2),
    (106.5, 22.5), (108.0, 21.3), (108.0, 18.0), (111, 17.8), (111.5, 21.0), (114.5, 21.8),
    (117, 22.5), (120, 21.5), (121, 21.8), (122.2, 25.3), (121, 27), (122.5, 30),
    (121.5, 32), (120.5, 34), (119.5, 35), (122.8, 37.4), (121, 38.3), (124.5, 39.8),
    (129, 42.3), (131, 42.8), (131.3, 45), (134.8, 48.3), (127.5, 50), (125, 53.5),
    (121, 53.3), (119.5, 50), (117.5, 49.6), (116, 47.8), (111.5, 45), (104, 41.8),
    (96.5, 42.7), (91, 45.2), (90.5, 47.9), (87.5, 49.1), (85, 47), (82.5, 45.5),
    (80.2, 45), (80.5, 43), (76, 40.7),
]


def main():
    outline = Polygon(OUTLINE)
    seeds, owner = [], []
    for i, (_, _, pts) in enumerate(PROVINCES):
        for lat, lon in pts:
            seeds.append((lon, lat))
            owner.append(i)
    far = [(0, -90), (0, 90), (200, -90), (200, 90)]
    vor = Voronoi(np.array(seeds + far))
    cells = [[] for _ in PROVINCES]
    for k, region_idx in enumerate(vor.point_region[: len(seeds)]):
        region = vor.regions[region_idx]
        assert -1 not in region
        cells[owner[k]].append(Polygon(vor.vertices[region]).intersection(outline))
    records = []
    for i, (name, region, pts) in enumerate(PROVINCES):
        shape = unary_union(cells[i]).simplify(0.01)
        polys = list(shape.geoms) if isinstance(shape, MultiPolygon) else [shape]
        rings = []
        for p in polys:
            assert not p.interiors, name
            rings.append([[round(lat, 4), round(lon, 4)] for lon, lat in p.exterior.coords[:-1]])
        lat, lon = pts[0]
        assert shape.contains(Polygon([(lon - 1e-3, lat - 1e-3), (lon + 1e-3, lat - 1e-3), (lon, lat + 1e-3)])), name
        records.append({"id": i + 1, "name": name, "region": region,
                        "capital": [lat, lon], "polygons": rings})
    out = Path(__file__).resolve().parents[1] / "src/geodecode/data/provinces.json"
    out.write_text(json.dumps({"fallback": {"id": 0, "name": "Unknown", "region": 10},
                               "provinces": records}, ensure_ascii=False, indent=1))
    print(f"wrote {len(records)} provinces to {out}")


if __name__ == "__main__":
    main()
