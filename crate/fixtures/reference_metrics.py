"""Independent reference for the four plan metrics, used to produce
grid16_golden.json. Requires shapely.

    python3 reference_metrics.py grid16.geojson grid16_plan.json grid16_population.json
"""
import json
import sys

from shapely.geometry import Point, shape

CATEGORIES = [["school"], ["hospital", "clinic"], ["office"], ["business"], ["recreation"]]
GREEN = {"park", "open_space", "green_fixed"}


def main(region_path, plan_path, population_path):
    region = json.load(open(region_path))
    plan = {int(k): v for k, v in json.load(open(plan_path))["assignments"].items()}
    residents = json.load(open(population_path))["residents"]
    areas = []
    for f in region["features"]:
        p = f["properties"]
        use = p.get("fixed_use") or plan.get(p["id"])
        areas.append((shape(f["geometry"]), use))

    service, ecology, satisfaction, inclusion = [], [], [], []
    for r in residents:
        home = Point(r["home"]["x"], r["home"]["y"])
        dist = [(poly.distance(home), use) for poly, use in areas]
        reach = lambda types, radius: any(d < radius and u in types for d, u in dist)
        service.append(sum(reach(c, 500.0) for c in CATEGORIES) / len(CATEGORIES))
        ecology.append(1.0 if any(d <= 300.0 and u in GREEN for d, u in dist) else 0.0)
        s = sum(reach([n], 500.0) for n in r["needs"]) / len(r["needs"])
        satisfaction.append(s)
        if r["is_marginalized"]:
            inclusion.append(s)

    mean = lambda xs: sum(xs) / len(xs) if xs else None
    json.dump(
        {
            "service": mean(service),
            "ecology": mean(ecology),
            "satisfaction": mean(satisfaction),
            "inclusion": mean(inclusion),
        },
        sys.stdout,
        indent=2,
    )
    print()


if __name__ == "__main__":
    main(*sys.argv[1:4])
