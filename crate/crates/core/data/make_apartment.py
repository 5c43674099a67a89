"""Regenerate apartment.json, the bundled evaluation map.

Interior 10 m x 7.5 m at 5 cm cells: living room (east), kitchen and
dining area (west), bathroom (south-west) and bedroom (north-west).
"""
import json
import math
from pathlib import Path

RES = 0.05
W, H = 204, 154  # 10.2 m x 7.7 m including a 0.1 m outer wall

grid = [[False] * W for _ in range(H)]


def box(x0, y0, x1, y1):
    """Mark [x0, x1) x [y0, y1) in meters as wall."""
    for r in range(int(round(y0 / RES)), int(round(y1 / RES))):
        for c in range(int(round(x0 / RES)), int(round(x1 / RES))):
            grid[r][c] = True


def clear(x0, y0, x1, y1):
    for r in range(int(round(y0 / RES)), int(round(y1 / RES))):
        for c in range(int(round(x0 / RES)), int(round(x1 / RES))):
            grid[r][c] = False


# outer walls
box(0, 0, 10.2, 0.1)
box(0, 7.6, 10.2, 7.7)
box(0, 0, 0.1, 7.7)
box(10.1, 0, 10.2, 7.7)

# bathroom: x in [0.1, 2.5], y in [0.1, 2.6], door on the east side
box(0.1, 2.6, 2.6, 2.7)
box(2.5, 0.1, 2.6, 2.7)
clear(2.5, 0.9, 2.6, 1.85)

# bedroom: x in [0.1, 4.0], y in [4.5, 7.6], door on the south side
box(0.1, 4.5, 4.1, 4.6)
box(4.0, 4.5, 4.1, 7.6)
clear(2.8, 4.5, 3.75, 4.6)

# stub wall between kitchen and living room
box(4.5, 0.1, 4.6, 1.9)

objects = [
    ("toilet", 0.55, 0.6, 0.25),
    ("plant", 2.15, 0.45, 0.2),
    ("bed", 1.0, 6.6, 0.4),
    ("chair", 3.35, 6.95, 0.22),
    ("monitor", 3.65, 7.3, 0.2),
    ("table", 2.0, 3.5, 0.3),
    ("chair", 1.3, 3.5, 0.22),
    ("plant", 4.2, 0.5, 0.2),
    ("sofa", 8.4, 6.95, 0.4),
    ("table", 8.4, 5.7, 0.35),
    ("monitor", 9.75, 4.0, 0.25),
    ("chair", 6.2, 6.9, 0.22),
    ("plant", 9.7, 0.5, 0.25),
    ("sofa", 7.0, 0.55, 0.4),
]

starts = [
    (1.3, 1.6, 0),
    (3.5, 1.2, 90),
    (3.3, 5.6, 270),
    (1.8, 5.2, 0),
    (5.5, 3.0, 180),
    (7.0, 2.2, 90),
    (9.0, 2.0, 135),
    (8.8, 3.6, 200),
    (6.0, 5.0, 300),
    (7.5, 4.5, 45),
    (3.2, 2.9, 0),
    (0.8, 4.0, 60),
    (5.2, 6.6, 225),
    (9.2, 6.2, 240),
    (6.5, 3.9, 150),
]

rows = ["".join("#" if grid[r][c] else "." for c in range(W)) for r in reversed(range(H))]
world = {
    "name": "apartment",
    "resolution": RES,
    "robot_radius": 0.18,
    "grid": rows,
    "objects": [{"category": c, "x": x, "y": y, "radius": r} for c, x, y, r in objects],
    "starts": [{"x": x, "y": y, "heading": h} for x, y, h in starts],
}

# sanity: starts keep clear of walls and objects
for i, (x, y, _) in enumerate(starts):
    for c, ox, oy, r in objects:
        assert math.hypot(x - ox, y - oy) > r + 0.3, (i, c)

Path(__file__).with_name("apartment.json").write_text(json.dumps(world, indent=1) + "\n")
