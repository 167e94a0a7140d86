"""Pendulum: grow a tree, re-verify it, and draw the tree over the metric-ellipse field.

    python demos/pendulum_tree.py [out_dir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Ellipse

from hapticrrt.cli import main, read_tree
from hapticrrt.config import shipped_path
from hapticrrt.storage import read_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out/pendulum")
cfg = str(shipped_path("pendulum"))
main(["plan", "--config", cfg, "--set", "planner.stop_at_goal=false", "--set", "planner.max_nodes=300",
      "--out", str(out / "plan")])
main(["verify", "--out", str(out / "plan")])
main(["metric-field", "--config", cfg, "--grid", "0:-1.2:1.2:9", "--grid", "1:-1.2:1.2:9", "--out", str(out / "field")])

doc = read_tree(out / "plan" / "tree.json")
fig, ax = plt.subplots(figsize=(7, 7))
header, field = read_csv(out / "field" / "metric.csv")
col = {h: k for k, h in enumerate(header)}
for row in field:
    if row[col["obstacle"]]:
        continue
    # axes of u^T G^2 u = 1 scale as 1/sqrt(eigenvalue); shrink to fit the grid spacing
    a, b = 1 / np.sqrt(row[col["eig0"]]), 1 / np.sqrt(row[col["eig1"]])
    s = 0.12 / max(a, b)
    ax.add_patch(Ellipse((row[col["u0"]], row[col["u1"]]), 2 * a * s, 2 * b * s,
                         angle=np.degrees(row[col["angle0"]]), fill=False, color="tab:blue", lw=0.8))
nodes = doc["nodes"]
for n in nodes[1:]:
    p = nodes[n["parent"]]
    ax.plot([p["u"][0], n["u"][0]], [p["u"][1], n["u"][1]], color="tab:blue", lw=0.5, alpha=0.5)
live = np.array([n["u"] for n in nodes if not n["dead_end"]])
dead = np.array([n["u"] for n in nodes if n["dead_end"]]).reshape(-1, 2)
ax.scatter(live[:, 0], live[:, 1], s=6, color="tab:green", label="node")
ax.scatter(dead[:, 0], dead[:, 1], s=14, color="tab:red", label="dead end (haptic obstacle)")
ax.add_patch(plt.Circle((0, 0), 1.0, fill=False, ls="--", color="grey"))
ax.set_aspect("equal")
ax.set_xlabel("u_x")
ax.set_ylabel("u_y")
ax.legend(loc="lower right")
fig.savefig(out / "pendulum_tree.png", dpi=150)
print(f"wrote {out / 'pendulum_tree.png'}")
