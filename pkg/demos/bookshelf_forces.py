"""Bookshelf: plan an insertion and plot book pose, control forces and W along the path.

    python demos/bookshelf_forces.py [out_dir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from hapticrrt.cli import main
from hapticrrt.config import shipped_path
from hapticrrt.storage import read_csv

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out/bookshelf")
if main(["plan", "--config", str(shipped_path("bookshelf")), "--out", str(out)]) != 0:
    sys.exit("no goal path found")
header, data = read_csv(out / "path.csv")
col = {h: k for k, h in enumerate(header)}
phi = data[:, col["phi"]]
fig, axs = plt.subplots(3, 1, sharex=True, figsize=(7, 8))
axs[0].plot(phi, data[:, col["z1"]], label="book y")
axs[0].plot(phi, data[:, col["z2"]], label="book angle")
axs[0].plot(phi, data[:, col["z3"]], label="left neighbour x")
axs[0].plot(phi, data[:, col["z6"]], label="right neighbour x")
axs[1].plot(phi, data[:, col["f_ctrl0"]], label="f_x")
axs[1].plot(phi, data[:, col["f_ctrl1"]], label="f_y")
axs[1].plot(phi, data[:, col["f_ctrl2"]], label="torque")
axs[2].plot(phi, data[:, col["W"]], color="k")
axs[2].set_ylabel("W")
axs[2].set_xlabel("haptic distance")
for ax in axs[:2]:
    ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(out / "bookshelf_forces.png", dpi=150)
print(f"wrote {out / 'bookshelf_forces.png'}")
