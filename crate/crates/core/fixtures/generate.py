#!/usr/bin/env python3
"""Regenerates the scenario corpus in this directory.

Raw map lines are sampled every 1 m. Obstacles are placed in (s, l) on the
analytic raw line and written as map-frame polygons.
"""

import json
import math
from pathlib import Path

HERE = Path(__file__).resolve().parent


def straight(length, step=1.0):
    n = int(round(length / step))
    return [(i * step, 0.0, 0.0) for i in range(n + 1)]


def chain(*pieces, step=1.0):
    """Pieces are ("line", length) or ("arc", radius, signed angle)."""
    x, y, th = 0.0, 0.0, 0.0
    pts = [(x, y, th)]
    for p in pieces:
        if p[0] == "line":
            n = int(round(p[1] / step))
            for _ in range(n):
                x += step * math.cos(th)
                y += step * math.sin(th)
                pts.append((x, y, th))
        else:
            _, r, ang = p
            length = r * abs(ang)
            n = max(1, int(math.ceil(length / step)))
            k = math.copysign(1.0 / r, ang)
            h = length / n
            cx, cy = x - math.sin(th) / k, y + math.cos(th) / k
            th0 = th
            for i in range(1, n + 1):
                th = th0 + k * h * i
                x = cx + math.sin(th) / k
                y = cy - math.cos(th) / k
                pts.append((x, y, th))
    return pts


def frenet_point(line, s, l):
    """Map point at station s (cumulative chord) and lateral offset l."""
    acc = 0.0
    for a, b in zip(line, line[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        if acc + seg >= s or b is line[-1]:
            t = (s - acc) / seg
            x = a[0] + t * (b[0] - a[0])
            y = a[1] + t * (b[1] - a[1])
            th = math.atan2(b[1] - a[1], b[0] - a[0])
            return (x - l * math.sin(th), y + l * math.cos(th))
        acc += seg
    raise ValueError("station beyond line")


def box(line, oid, s0, s1, l0, l1, speed=0.0):
    corners = [frenet_point(line, s, l) for s, l in ((s0, l0), (s1, l0), (s1, l1), (s0, l1))]
    return {
        "id": oid,
        "polygon_m": [[round(x, 4), round(y, 4)] for x, y in corners],
        "speed_mps": speed,
    }


def lane(lid, left, right, direction="forward"):
    return {"id": lid, "direction": direction, "left_l_m": left, "right_l_m": right}


def ego_at(line, s, l=0.0):
    x, y = frenet_point(line, s, l)
    acc = 0.0
    for a, b in zip(line, line[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        if acc + seg >= s:
            th = math.atan2(b[1] - a[1], b[0] - a[0])
            break
        acc += seg
    return {"x_m": round(x, 6), "y_m": round(y, 6), "theta_rad": round(th, 9)}


def scenario(name, description, line, lanes, ego, obstacles=(), ego_lane=0, **sections):
    doc = {
        "name": name,
        "description": description,
        "raw_line_m": [[round(p[0], 6), round(p[1], 6)] for p in line],
        "road": {"lanes": lanes, "ego_lane_index": ego_lane},
        "ego": ego,
        "obstacles": list(obstacles),
    }
    doc.update(sections)
    return doc


def corpus():
    out = []
    line = straight(200)
    out.append(scenario(
        "straight_empty", "Straight single-lane road, no obstacles, ego centered.",
        line, [lane("ego", 1.75, -1.75)], ego_at(line, 5.0)))

    out.append(scenario(
        "side_blockage", "A parked car intrudes from the right edge; the lane stays passable.",
        line, [lane("ego", 1.75, -1.75)], ego_at(line, 5.0),
        [box(line, "parked", 40.0, 45.0, -2.3, -0.9)]))

    out.append(scenario(
        "lane_borrow_left", "A stalled vehicle fills the ego lane; the left lane runs the same way.",
        line, [lane("left", 5.25, 1.75), lane("ego", 1.75, -1.75)], ego_at(line, 5.0, 0.1),
        [box(line, "stalled", 60.0, 66.0, -1.3, 1.2)], ego_lane=1))

    out.append(scenario(
        "staggered_two", "Two side blockages, right then left, in a wide lane.",
        line, [lane("ego", 2.0, -2.0)], ego_at(line, 5.0),
        [box(line, "right_car", 40.0, 46.0, -2.5, -0.6), box(line, "left_car", 70.0, 76.0, 0.5, 2.5)]))

    out.append(scenario(
        "fully_blocked_single_lane", "Single-lane road closed by a centered obstacle; no neighbor lane.",
        line, [lane("ego", 1.75, -1.75)], ego_at(line, 5.0),
        [box(line, "barrier", 50.0, 55.0, -1.0, 1.1)]))

    out.append(scenario(
        "cluttered", "Several side blockages on both sides of a two-lane road.",
        line, [lane("left", 5.25, 1.75), lane("ego", 1.75, -1.75)], ego_at(line, 5.0, -0.2),
        [
            box(line, "bin", 28.0, 30.0, -2.0, -0.95),
            box(line, "van", 52.0, 58.0, 0.55, 2.2),
            box(line, "truck", 85.0, 95.0, -2.2, -0.7),
            box(line, "cone", 112.0, 113.0, 0.6, 1.0, 0.2),
            box(line, "cyclist", 130.0, 132.0, -1.0, -0.4, 4.0),
        ], ego_lane=1))

    out.append(scenario(
        "narrow_passage", "Curb intrusions on both sides leave just over the vehicle width plus buffers.",
        line, [lane("ego", 1.5, -1.5)], ego_at(line, 5.0),
        [box(line, "post_left", 50.0, 58.0, 1.4, 2.5), box(line, "post_right", 50.0, 58.0, -2.5, -1.1)]))

    u = chain(("line", 80.0), ("arc", 3.5, math.pi), ("line", 80.0))
    out.append(scenario(
        "uturn", "Tight U-turn of radius 3.5 m on the guide line; the vehicle needs 5.05 m.",
        u, [lane("ego", 1.75, -4.5)], ego_at(u, 5.0)))

    c = chain(("line", 30.0), ("arc", 60.0, 1.6), ("line", 75.0))
    out.append(scenario(
        "curved_road_obstacle", "Left-hand bend of radius 60 m with a car parked on the inside.",
        c, [lane("ego", 1.75, -1.75), lane("right", -1.75, -5.25)], ego_at(c, 5.0),
        [box(c, "inside_car", 70.0, 75.0, 0.8, 2.4)]))

    out.append(scenario(
        "dynamic_obstacle_ignored", "A moving car ahead in the lane is left to speed planning.",
        line, [lane("ego", 1.75, -1.75)], ego_at(line, 5.0),
        [box(line, "lead_car", 30.0, 35.0, -0.9, 0.9, 6.0)]))

    out.append(scenario(
        "reverse_lane_borrow", "Blocked ego lane; the only neighbor is an oncoming lane on the left.",
        line, [lane("oncoming", 5.25, 1.75, "reverse"), lane("ego", 1.75, -1.75)], ego_at(line, 5.0),
        [box(line, "delivery_van", 45.0, 52.0, -1.6, 1.3)], ego_lane=1))

    out.append(scenario(
        "noisy_map_line", "Map line with 5 cm point noise and a side blockage.",
        line, [lane("ego", 1.75, -1.75)], ego_at(line, 5.0),
        [box(line, "skip", 70.0, 74.0, 0.9, 2.2)],
        run={"raw_noise_m": 0.05}))
    return out


def main():
    for doc in corpus():
        path = HERE / f"{doc['name']}.json"
        path.write_text(json.dumps(doc, indent=1) + "\n")
        print(path.name)


if __name__ == "__main__":
    main()
