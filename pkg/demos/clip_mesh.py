"""Clip: branch mesh over (u_ly, u_rx) and the z_theta / W surfaces coloured by branch.

    python demos/clip_mesh.py [out_dir] [n]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from hapticrrt.cli import main
from hapticrrt.config import shipped_path
from hapticrrt.storage import read_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out/clip")
n = sys.argv[2] if len(sys.argv) > 2 else "15"
main(["mesh", "--config", str(shipped_path("clip")), "--grid", f"0:0.3:0.8:{n}", "--grid", f"1:0.0:0.9:{n}",
      "--out", str(out)])
header, data = read_csv(out / "mesh.csv")
col = {h: k for k, h in enumerate(header)}
fig = plt.figure(figsize=(12, 5))
for k, (name, label) in enumerate((("z0", "z_theta"), ("W", "W"))):
    ax = fig.add_subplot(1, 2, k + 1, projection="3d")
    ax.scatter(data[:, col["u0"]], data[:, col["u1"]], data[:, col[name]], c=data[:, col["branch"]],
               cmap="tab20", s=4)
    ax.set_xlabel("u_ly")
    ax.set_ylabel("u_rx")
    ax.set_zlabel(label)
fig.tight_layout()
fig.savefig(out / "clip_mesh.png", dpi=150)
print(f"wrote {out / 'clip_mesh.png'}")
