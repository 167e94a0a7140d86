"""Command-line interface: ``plan``, ``mesh``, ``metric-field`` and ``verify``.

Exit codes: 0 success, 1 error (bad config, unwritable output), 2 planner
finished without reaching the goal, 3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import apply_overrides, dumps, load, loads
from .geometry import ConfigError
from .manifold import GridSpec, branch_mesh, metric_field, _is_obstacle
from .planner import PlannerParams, extract_path, plan, StartInvalid
from .potentials import ConfigPoint, evaluate_bundle, model_from_config
from .storage import csv_text, dumps_json, loads_json, read_csv, sha256_file, vector_columns, write_atomic

log = logging.getLogger("hapticrrt")

EXIT_OK, EXIT_ERROR, EXIT_NO_GOAL, EXIT_VERIFY = 0, 1, 2, 3

TREE_FILE, PATH_FILE, MESH_FILE, METRIC_FILE = "tree.json", "path.csv", "mesh.csv", "metric.csv"
MANIFEST_FILE, CONFIG_FILE = "manifest.json", "config.json"


# -- documents ---------------------------------------------------------------

def tree_document(result, model, params: PlannerParams) -> dict:
    nodes = []
    for n in result.tree:
        nodes.append({
            "id": n.id,
            "parent": n.parent_id,
            "z": n.eq.z,
            "u": n.eq.u,
            "W": n.eq.W,
            "det_hzz": n.eq.hess_det,
            "residual": n.eq.residual_norm,
            "dead_end": n.dead_end,
            "edge_phi": n.edge_phi,
            "cumulative_phi": n.cumulative_phi,
            "stop_reason": n.stop_reason or None,
        })
    return {
        "metadata": {
            "format": "hapticrrt-tree",
            "version": __version__,
            "scenario": model.name,
            "scenario_hash": model.scenario_hash,
            "seed": params.rng_seed,
            "params": params.as_dict(),
            "n_z": model.n_z,
            "n_u": model.n_u,
            "goal_node": None if result.goal_node is None else result.goal_node.id,
            "exhausted": result.exhausted,
        },
        "nodes": nodes,
    }


def path_csv(path, n_z: int, n_u: int) -> str:
    header = (["t"] + vector_columns("u", n_u) + vector_columns("z", n_z) + ["phi", "W"]
              + vector_columns("f_ctrl", n_u) + ["residual"])
    rows = (
        [float(path.t[k]), *map(float, path.u[k]), *map(float, path.z[k]), float(path.phi[k]), float(path.W[k]),
         *map(float, path.f_ctrl[k]), float(path.residual[k])]
        for k in range(len(path.t))
    )
    return csv_text(header, rows)


def mesh_csv(records, n_z: int, n_u: int) -> str:
    header = (["i", "j", "m", "branch"] + vector_columns("u", n_u) + vector_columns("z", n_z)
              + ["W", "det_hzz", "stable", "residual"])
    rows = (
        [r.i, r.j, r.m, r.branch, *map(float, r.eq.u), *map(float, r.eq.z), float(r.eq.W), float(r.eq.hess_det),
         int(r.eq.stable), float(r.eq.residual_norm)]
        for r in records
    )
    return csv_text(header, rows)


def metric_csv(records, grid: GridSpec, n_z: int, n_u: int) -> str:
    header = (["i", "j", "m"] + vector_columns("u", n_u) + vector_columns("z", n_z)
              + ["W", "det_hzz", "obstacle"] + vector_columns("eig", n_u) + vector_columns("angle", n_u))
    rows = []
    for r in records:
        if r.eq is None:
            u, z, W, det = grid.control(r.i, r.j), np.full(n_z, np.nan), math.nan, math.nan
        else:
            u, z, W, det = r.eq.u, r.eq.z, r.eq.W, r.eq.hess_det
        rows.append([r.i, r.j, r.m, *map(float, u), *map(float, z), float(W), float(det), int(r.obstacle),
                     *map(float, r.eigenvalues), *map(float, r.angles)])
    return csv_text(header, rows)


def read_tree(path) -> dict:
    return loads_json(Path(path).read_text(encoding="utf-8"))


# -- argument handling -------------------------------------------------------

def _parse_grid(items, cfg: dict, model) -> GridSpec:
    base = np.asarray(cfg["start"]["u"], dtype=float)
    if items:
        if len(items) != 2:
            raise ConfigError("--grid must be given exactly twice (one per slice axis)")
        axes, lo, hi, n = [], [], [], []
        for it in items:
            parts = it.split(":")
            if len(parts) != 4:
                raise ConfigError(f"--grid {it!r}: expected AXIS:LO:HI:N")
            try:
                axes.append(int(parts[0]))
                lo.append(float(parts[1]))
                hi.append(float(parts[2]))
                n.append(int(parts[3]))
            except ValueError as exc:
                raise ConfigError(f"--grid {it!r}: {exc}") from exc
    else:
        g = cfg.get("branches", {}).get("grid")
        if g is not None:
            axes, lo, hi, n = g["axes"], g["lo"], g["hi"], g["n"]
        else:
            axes = [0, 1]
            lo = [float(model.control_lo[a]) for a in axes]
            hi = [float(model.control_hi[a]) for a in axes]
            n = [30, 30]
    try:
        return GridSpec(tuple(axes), tuple(lo), tuple(hi), tuple(n), base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _effective_config(args) -> dict:
    cfg = load(args.config)
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"planner.seed={args.seed}")
    return apply_overrides(cfg, overrides)


def _manifest(args, command: str, cfg: dict, model, out: Path, files: list, started: float) -> dict:
    return {
        "tool": "hapticrrt",
        "version": __version__,
        "command": command,
        "config_path": str(args.config),
        "overrides": list(args.set or []),
        "seed": cfg.get("planner", {}).get("seed", 0),
        "scenario": model.name,
        "scenario_hash": model.scenario_hash,
        "grid": getattr(args, "grid", None),
        "out": str(out),
        "duration_s": time.perf_counter() - started,
        "files": {name: sha256_file(out / name) for name in files},
    }


def _write_outputs(out: Path, outputs: dict, manifest_fn) -> None:
    for name, text in outputs.items():
        write_atomic(out / name, text)
    write_atomic(out / MANIFEST_FILE, dumps_json(manifest_fn(list(outputs))))


# -- commands ----------------------------------------------------------------

def cmd_plan(args) -> int:
    started = time.perf_counter()
    cfg = _effective_config(args)
    model = model_from_config(cfg)
    params = PlannerParams.from_config(cfg)
    start = ConfigPoint(cfg["start"]["z"], cfg["start"]["u"])

    def progress(n, node):
        if (n + 1) % 100 == 0:
            log.info("node %d: W=%.6g dead_end=%s", node.id, node.eq.W, node.dead_end)

    result = plan(model, start, params, progress)
    out = Path(args.out)
    outputs = {CONFIG_FILE: dumps(cfg), TREE_FILE: dumps_json(tree_document(result, model, params))}
    if result.goal_node is not None:
        outputs[PATH_FILE] = path_csv(extract_path(result.tree, result.goal_node), model.n_z, model.n_u)
    _write_outputs(out, outputs, lambda files: _manifest(args, "plan", cfg, model, out, files, started))
    dead = sum(n.dead_end for n in result.tree)
    print(f"nodes={len(result.tree)} dead_ends={dead} goal={'none' if result.goal_node is None else result.goal_node.id}")
    if params.goal is not None and result.goal_node is None:
        return EXIT_NO_GOAL
    return EXIT_OK


def cmd_mesh(args) -> int:
    started = time.perf_counter()
    cfg = _effective_config(args)
    model = model_from_config(cfg)
    grid = _parse_grid(args.grid, cfg, model)
    grid.check_size()
    link = cfg.get("branches", {}).get("link_radius", 0.02)
    records = branch_mesh(model, grid, link_radius=link)
    out = Path(args.out)
    outputs = {CONFIG_FILE: dumps(cfg), MESH_FILE: mesh_csv(records, model.n_z, model.n_u)}
    _write_outputs(out, outputs, lambda files: _manifest(args, "mesh", cfg, model, out, files, started))
    print(f"grid={grid.n[0]}x{grid.n[1]} equilibria={len(records)} branches={len({r.branch for r in records})}")
    return EXIT_OK


def cmd_metric_field(args) -> int:
    started = time.perf_counter()
    cfg = _effective_config(args)
    model = model_from_config(cfg)
    grid = _parse_grid(args.grid, cfg, model)
    grid.check_size()
    lam = PlannerParams.from_config(cfg).lam
    records = metric_field(model, grid, lam)
    out = Path(args.out)
    outputs = {CONFIG_FILE: dumps(cfg), METRIC_FILE: metric_csv(records, grid, model.n_z, model.n_u)}
    _write_outputs(out, outputs, lambda files: _manifest(args, "metric-field", cfg, model, out, files, started))
    print(f"grid={grid.n[0]}x{grid.n[1]} rows={len(records)} obstacles={sum(r.obstacle for r in records)}")
    return EXIT_OK


class _Report:
    def __init__(self) -> None:
        self.lines = []
        self.failed = False

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        self.lines.append(f"PASS {name}" if ok else f"FAIL {name}" + (f": {detail}" if detail else ""))
        self.failed |= not ok
        return ok


def _close(a: float, b: float, rel: float, abs_: float = 1e-12) -> bool:
    if math.isnan(a) and math.isnan(b):
        return True
    return abs(a - b) <= abs_ + rel * max(abs(a), abs(b))


def verify_dir(out, node_tol: float = 1e-6, drift_tol: float = 1e-5) -> _Report:
    """Re-check a run directory; returns a report with one line per check."""
    out = Path(out)
    rep = _Report()
    mpath = out / MANIFEST_FILE
    if not rep.check("manifest present", mpath.is_file(), str(mpath)):
        return rep
    manifest = loads_json(mpath.read_text(encoding="utf-8"))
    for name, digest in sorted(manifest.get("files", {}).items()):
        p = out / name
        rep.check(f"hash {name}", p.is_file() and sha256_file(p) == digest,
                  "missing" if not p.is_file() else ("" if sha256_file(p) == digest else "content changed"))
    try:
        cfg = loads((out / CONFIG_FILE).read_text(encoding="utf-8"))
        model = model_from_config(cfg)
    except (OSError, ConfigError) as exc:
        rep.check("config copy", False, str(exc))
        return rep
    rep.check("scenario hash", manifest.get("scenario_hash") == model.scenario_hash)
    rep.check("seed", manifest.get("seed") == cfg.get("planner", {}).get("seed", 0),
              f"manifest {manifest.get('seed')} vs config {cfg.get('planner', {}).get('seed', 0)}")

    def residual(z, u):
        return evaluate_bundle(model, ConfigPoint(z, u))

    if (out / TREE_FILE).is_file():
        _verify_tree(rep, read_tree(out / TREE_FILE), manifest, model, cfg, residual, node_tol)
        if (out / PATH_FILE).is_file():
            _verify_path(rep, out / PATH_FILE, read_tree(out / TREE_FILE), model, residual, drift_tol)
    if (out / MESH_FILE).is_file():
        header, data = read_csv(out / MESH_FILE)
        nz, nu = model.n_z, model.n_u
        bad = []
        for row in data:
            u, z = row[4:4 + nu], row[4 + nu:4 + nu + nz]
            b = residual(z, u)
            if not (np.linalg.norm(b.grad_z) <= max(node_tol, 1e-8) and np.linalg.eigvalsh(b.H_zz)[0] > 0):
                bad.append(f"({int(row[0])},{int(row[1])},m={int(row[2])})")
        rep.check("mesh equilibria", not bad, ", ".join(bad[:10]))
    return rep


def _verify_tree(rep, doc, manifest, model, cfg, bundle, node_tol) -> None:
    meta = doc.get("metadata", {})
    rep.check("tree seed", meta.get("seed") == manifest.get("seed"),
              f"tree {meta.get('seed')} vs manifest {manifest.get('seed')}")
    rep.check("tree scenario hash", meta.get("scenario_hash") == model.scenario_hash)
    nodes = doc.get("nodes", [])
    byid = {n["id"]: n for n in nodes}
    lam = PlannerParams.from_config(cfg).lam
    phi_bad, parent_bad, dead_bad, res_bad = [], [], [], []
    for n in nodes:
        pid = n["parent"]
        if pid is None:
            if n["id"] != 0 or n["cumulative_phi"] != 0:
                phi_bad.append(n["id"])
        else:
            p = byid.get(pid)
            if p is None or pid >= n["id"] or p["dead_end"]:
                parent_bad.append(n["id"])
            elif not _close(n["cumulative_phi"], p["cumulative_phi"] + n["edge_phi"], 0.0, 1e-9):
                phi_bad.append(n["id"])
            if n["dead_end"] != (n["stop_reason"] == "obstacle"):
                dead_bad.append(n["id"])
        b = bundle(n["z"], n["u"])
        r = float(np.linalg.norm(b.grad_z))
        if not _close(b.W, n["W"], 1e-9, 1e-12) or not _close(r, n["residual"], 1e-6, 1e-12):
            res_bad.append(n["id"])
        elif not n["dead_end"] and not (r <= node_tol and not _is_obstacle(b.H_zz, lam)):
            res_bad.append(n["id"])
    rep.check("phi additivity", not phi_bad, "nodes " + ", ".join(map(str, phi_bad[:20])))
    rep.check("parent links", not parent_bad, "nodes " + ", ".join(map(str, parent_bad[:20])))
    rep.check("dead-end labels", not dead_bad, "nodes " + ", ".join(map(str, dead_bad[:20])))
    rep.check("node equilibria", not res_bad, "nodes " + ", ".join(map(str, res_bad[:20])))


def _verify_path(rep, path, doc, model, bundle, drift_tol) -> None:
    header, data = read_csv(path)
    nz, nu = model.n_z, model.n_u
    U = data[:, 1:1 + nu]
    Z = data[:, 1 + nu:1 + nu + nz]
    phi = data[:, 1 + nu + nz]
    goal = doc["metadata"].get("goal_node")
    rep.check("path goal", goal is not None, "path.csv present but the tree has no goal node")
    if goal is not None:
        cum = doc["nodes"][goal]["cumulative_phi"]
        rep.check("path phi total", _close(float(phi[-1]), cum, 0.0, 1e-9), f"{float(phi[-1])!r} vs node {cum!r}")
    rep.check("path phi monotone", bool(np.all(np.diff(phi) >= -1e-12)))
    drift = [k for k in range(len(data)) if not np.linalg.norm(bundle(Z[k], U[k]).grad_z) <= drift_tol]
    rep.check("path manifold fidelity", not drift,
              f"{len(drift)} of {len(data)} rows exceed {drift_tol:g} (first rows {drift[:5]})")


def cmd_verify(args) -> int:
    rep = verify_dir(args.out, args.node_tol, args.drift_tol)
    for line in rep.lines:
        print(line)
    return EXIT_VERIFY if rep.failed else EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hapticrrt", description="Planning on equilibrium manifolds of quasi-static manipulation.")
    ap.add_argument("--version", action="version", version=f"hapticrrt {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="progress messages on standard error")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scenario config (JSON)")
            p.add_argument("--seed", type=int, help="override planner.seed")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value (repeatable)")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("plan", help="grow a HapticRRT tree; writes tree.json and path.csv")
    common(p)
    p.set_defaults(func=cmd_plan)
    for name, fn, what in (("mesh", cmd_mesh, "stable branches over a 2D control slice; writes mesh.csv"),
                           ("metric-field", cmd_metric_field, "metric ellipses over a 2D control slice; writes metric.csv")):
        p = sub.add_parser(name, help=what)
        common(p)
        p.add_argument("--grid", action="append", metavar="AXIS:LO:HI:N",
                       help="one slice axis (give twice); defaults to the config's branches.grid")
        p.set_defaults(func=fn)
    p = sub.add_parser("verify", help="re-check the invariants of an output directory")
    common(p, needs_config=False)
    p.add_argument("--node-tol", type=float, default=1e-6, help="residual bound at live tree nodes")
    p.add_argument("--drift-tol", type=float, default=1e-5, help="residual bound at path rows")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, StartInvalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
