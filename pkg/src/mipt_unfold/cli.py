"""Command-line entry points: sweeps, verification, Bell-proxy table, crossings.

Sweep configs are YAML with three sections::

    sweep:
      kinds: [P, NP, G]
      p_grid: [0.1, 0.2, 0.3, 0.4]
      L_list: [8, 12]
      trajectories: 100
    circuit:
      n_layers: null      # default 6 L
      burn_in: null       # default min(4 L, n_layers - 1)
      max_L: 20
    run:
      master_seed: 0
      out: results/sweep.csv
      workers: 1

Fixed unfoldings, including GEN atom lists, go in an optional
``sweep.specs`` list, e.g. ``[{kind: GEN, atoms: [[0.5, 0.8]]}, {kind: NP,
param: 0.5}]``; they run at their own effective rate on every size and are
left out of the crossing analysis.

The JSON sidecar ``<out>.json`` holds the config, per-cell quadrant
statistics and the crossing estimates.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .analytic import bell_entropy_loss, report_passed, verification_report
from .circuit import CircuitConfig, run_trajectory
from .observables import (
    DegenerateCrossingError,
    EnsembleRow,
    NoCrossingError,
    aggregate,
    find_crossing,
)
from .statevector import CapacityError
from .unfoldings import G_RATE_CAP, Kind, UnfoldingSpec, effective_rate, invert_rate

log = logging.getLogger("mipt_unfold")

CSV_COLUMNS = ("kind", "p_eff", "L", "n_traj", "S_AB_mean", "S_AB_err", "I3_mean", "I3_err")
WORKERS_ENV = "MIPT_WORKERS"
SWEEP_KINDS = (Kind.P, Kind.NP, Kind.U, Kind.G)
_SECTIONS = {
    "sweep": ("kinds", "p_grid", "L_list", "trajectories", "specs"),
    "circuit": ("n_layers", "burn_in", "max_L"),
    "run": ("master_seed", "out", "workers"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, kw_only=True)
class SweepConfig:
    L_list: tuple[int, ...]
    trajectories: int
    kinds: tuple[str, ...] = ()
    p_grid: tuple[float, ...] = ()
    specs: tuple[dict, ...] = ()
    n_layers: int | None = None
    burn_in: int | None = None
    max_L: int = 20
    master_seed: int = 0
    out: str = "results/sweep.csv"
    workers: int = 1

    def __post_init__(self):
        kinds = tuple(Kind(k).value for k in self.kinds)
        bad = [k for k in kinds if Kind(k) not in SWEEP_KINDS]
        if bad:
            raise ConfigError(f"sweeps support {[k.value for k in SWEEP_KINDS]}, got {bad}")
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        object.__setattr__(self, "L_list", tuple(int(v) for v in self.L_list))
        object.__setattr__(self, "specs", tuple(_normalize_spec(d) for d in self.specs))
        if not self.L_list or not (self.specs or (self.kinds and self.p_grid)):
            raise ConfigError("need L_list and either kinds with a p_grid or explicit specs")
        if any(not 0 <= p <= 1 for p in self.p_grid):
            raise ConfigError(f"every p_eff must lie in [0, 1], got {self.p_grid}")
        for L in self.L_list:
            if L < 4 or L % 4:
                raise ConfigError(f"L must be a positive multiple of 4, got {L}")
            if L > self.max_L:
                raise CapacityError(f"L={L} exceeds max_L={self.max_L}")
        if self.trajectories < 1:
            raise ConfigError("trajectories must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    def to_dict(self) -> dict:
        flat = asdict(self)
        for key in ("kinds", "p_grid", "L_list", "specs"):
            flat[key] = list(flat[key])
        return {sec: {k: flat[k] for k in keys} for sec, keys in _SECTIONS.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        flat = {}
        for sec, body in (data or {}).items():
            if sec not in _SECTIONS:
                raise ConfigError(f"unknown section {sec!r}")
            for k, v in (body or {}).items():
                if k not in _SECTIONS[sec]:
                    raise ConfigError(f"unknown key {sec}.{k}")
                flat[k] = v
        required = ("L_list", "trajectories")
        missing = [k for k in required if k not in flat]
        if missing:
            raise ConfigError(f"missing sweep keys {missing}")
        return cls(**flat)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "SweepConfig":
        return cls.from_dict(yaml.safe_load(text))

    @property
    def sidecar(self) -> Path:
        return Path(self.out).with_suffix(".json")


def _normalize_spec(d) -> dict:
    if isinstance(d, UnfoldingSpec):
        spec = d
    else:
        extra = set(d) - {"kind", "param", "atoms"}
        if extra:
            raise ConfigError(f"unknown spec keys {sorted(extra)}")
        spec = UnfoldingSpec(d["kind"], d.get("param", 0.0), tuple(map(tuple, d.get("atoms", ()))))
    out = {"kind": spec.kind.value, "param": spec.param}
    if spec.kind is Kind.GEN:
        out["atoms"] = [list(a) for a in spec.atoms]
    return out


def _spec_from_dict(d: dict) -> UnfoldingSpec:
    return UnfoldingSpec(d["kind"], d["param"], tuple(map(tuple, d.get("atoms", ()))))


def cell_seed(master_seed: int, kind: str, p_eff: float, L: int, spec: UnfoldingSpec | None = None) -> int:
    """64-bit seed for one (kind, p, L) cell; independent of grid order.

    Cells from explicit specs also hash the native parameter and atoms.
    """
    key = [int(master_seed), list(Kind).index(Kind(kind)), int(round(p_eff * 1e6)), int(L)]
    if spec is not None:
        values = [spec.param] + [v for a in spec.atoms for v in a]
        key += [1] + [int(round(v * 1e9)) % 2**63 for v in values]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


def cell_config(cfg: SweepConfig, kind: str, p_eff: float, L: int) -> CircuitConfig:
    # G needs alpha -> infinity at p = 1; run at the largest finite rate
    p = min(p_eff, G_RATE_CAP) if Kind(kind) is Kind.G else p_eff
    return CircuitConfig(
        L=L,
        unfolding=invert_rate(kind, p),
        n_layers=cfg.n_layers,
        burn_in=cfg.burn_in,
        master_seed=cell_seed(cfg.master_seed, kind, p_eff, L),
    )


def spec_cell_config(cfg: SweepConfig, spec: UnfoldingSpec, L: int) -> CircuitConfig:
    p = effective_rate(spec)
    return CircuitConfig(
        L=L,
        unfolding=spec,
        n_layers=cfg.n_layers,
        burn_in=cfg.burn_in,
        master_seed=cell_seed(cfg.master_seed, spec.kind, p, L, spec),
    )


def _run_block(config: CircuitConfig, tids):
    return [run_trajectory(config, t) for t in tids]


def _blocks(n: int, workers: int):
    size = max(1, math.ceil(n / (4 * workers)))
    return [range(s, min(n, s + size)) for s in range(0, n, size)]


def _row_to_csv(row: EnsembleRow) -> list[str]:
    return [row.kind, repr(row.p_eff), str(row.L), str(row.n_traj)] + [
        repr(getattr(row, c)) for c in CSV_COLUMNS[4:]
    ]


def crossings_from_rows(rows, n_boot: int = 200, master_seed: int = 0) -> dict:
    """Consecutive-size crossings of the I3 curves, per kind.

    The primary estimate of a kind is the one from its largest size pair.
    """
    out = {}
    kinds = sorted({r.kind for r in rows}, key=lambda k: list(Kind).index(Kind(k)))
    for kind in kinds:
        sizes = sorted({r.L for r in rows if r.kind == kind})
        pairs = []
        for L1, L2 in zip(sizes, sizes[1:]):
            curves = [
                [(r.p_eff, r.I3_mean, r.I3_err) for r in rows if r.kind == kind and r.L == L]
                for L in (L1, L2)
            ]
            seed = np.random.SeedSequence([int(master_seed), list(Kind).index(Kind(kind)), L1, L2])
            entry = {"pair": [L1, L2], "p_c": None, "bootstrap_error": None}
            try:
                est = find_crossing(*curves, rng=np.random.default_rng(seed), kind=kind, pair=(L1, L2), n_boot=n_boot)
                entry.update(est.as_dict(), status="crossing")
            except NoCrossingError:
                entry["status"] = "no_crossing"
            except DegenerateCrossingError:
                entry["status"] = "degenerate"
            except ValueError as err:
                entry["status"] = f"insufficient: {err}"
            pairs.append(entry)
        out[kind] = {"pairs": pairs, "primary": pairs[-1] if pairs else None}
    return out


def run_sweep(cfg: SweepConfig, progress: bool = False) -> tuple[list[EnsembleRow], dict]:
    """Run every cell, write the CSV row by row, then the JSON sidecar."""
    cells = [(k, p, L, cell_config(cfg, k, p, L)) for k in cfg.kinds for L in cfg.L_list for p in cfg.p_grid]
    n_grid_cells = len(cells)
    for d in cfg.specs:
        spec = _spec_from_dict(d)
        cells += [(spec.kind.value, effective_rate(spec), L, spec_cell_config(cfg, spec, L)) for L in cfg.L_list]
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows: list[EnsembleRow] = []
    sidecar = {"config": cfg.to_dict(), "status": "running", "cells": [], "crossings": {}}
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        with out.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            fh.flush()
            pending = []
            for k, p, L, cc in cells:
                blocks = _blocks(cfg.trajectories, cfg.workers)
                if pool is None:
                    pending.append((cc, blocks, None))
                else:
                    pending.append((cc, blocks, [pool.submit(_run_block, cc, b) for b in blocks]))
            for (k, p, L, _), (cc, blocks, futures) in zip(cells, pending):
                if futures is None:
                    results = [r for b in blocks for r in _run_block(cc, b)]
                else:
                    results = [r for f in futures for r in f.result()]
                results.sort(key=lambda r: r.trajectory_id)
                row = aggregate(results, cc)
                rows.append(row)
                writer.writerow(_row_to_csv(row))
                fh.flush()
                sidecar["cells"].append(
                    {**row.as_dict(), "requested_p": p, "unfolding": str(cc.unfolding), "cell_seed": cc.master_seed}
                )
                if progress:
                    log.info("%s p=%g L=%d: S_AB=%.4f I3=%.4f", k, p, L, row.S_AB_mean, row.I3_mean)
        sidecar["crossings"] = crossings_from_rows(rows[:n_grid_cells], master_seed=cfg.master_seed)
        sidecar["status"] = "complete"
    except BaseException as err:
        sidecar["status"] = f"aborted: {type(err).__name__}: {err}"
        raise
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
        cfg.sidecar.write_text(json.dumps(sidecar, indent=2, allow_nan=True) + "\n")
    return rows, sidecar["crossings"]


def read_rows(path) -> list[EnsembleRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [
            EnsembleRow(
                kind=r["kind"],
                p_eff=float(r["p_eff"]),
                L=int(r["L"]),
                n_traj=int(r["n_traj"]),
                **{c: float(r[c]) for c in CSV_COLUMNS[4:]},
            )
            for r in reader
        ]


def bell_proxy_table(p_grid, rows=None) -> list[dict]:
    """Analytic Bell loss per kind and p, joined with sweep ``S_AB / L`` if given."""
    table = []
    for kind in ("NP", "G", "P", "U"):
        for p in p_grid:
            q = min(p, G_RATE_CAP) if kind == "G" else p
            base = {"kind": kind, "p_eff": float(p), "dS_bell": bell_entropy_loss(invert_rate(kind, q))}
            matches = [r for r in rows or () if r.kind == kind and math.isclose(r.p_eff, q, abs_tol=1e-9)]
            if not matches:
                table.append({**base, "L": None, "S_AB_density": None, "S_AB_density_err": None})
            for r in sorted(matches, key=lambda r: r.L):
                d, e = r.S_AB_density
                table.append({**base, "L": r.L, "S_AB_density": d, "S_AB_density_err": e})
    return table


def _parse_grid(text: str) -> list[float]:
    """``0,0.1,0.5`` or ``start:stop:step`` (stop inclusive)."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step))
        return [round(start + k * step, 12) for k in range(n + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


def _csv_list(cast):
    return lambda text: [cast(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mipt-unfold", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run a circuit sweep from a YAML config")
    sw.add_argument("config", type=Path)
    sw.add_argument("--kind", type=_csv_list(str), help="comma-separated kinds")
    sw.add_argument("--p", type=_parse_grid, help="p grid, comma list or start:stop:step")
    sw.add_argument("--L", type=_csv_list(int), help="comma-separated sizes")
    sw.add_argument("--trajectories", type=int)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")
    sw.add_argument("--workers", type=int, help=f"overrides ${WORKERS_ENV} and the config")
    sw.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")

    vf = sub.add_parser("verify", help="run the analytic verification suite")
    vf.add_argument("--out", type=Path, help="also write the JSON report here")
    vf.add_argument("--n-random", type=int, default=1000)

    bp = sub.add_parser("bell-proxy", help="Bell-pair entropy loss table")
    bp.add_argument("--grid", type=_parse_grid, default=_parse_grid("0:1:0.1"))
    bp.add_argument("--sweep", type=Path, help="sweep CSV to join S_AB/L from")
    bp.add_argument("--out", type=Path)

    cr = sub.add_parser("crossing", help="finite-size crossings from a sweep CSV")
    cr.add_argument("--in", dest="infile", type=Path, required=True)
    cr.add_argument("--n-boot", type=int, default=200)
    cr.add_argument("--seed", type=int, default=0)
    return parser


def resolve_sweep_config(args) -> SweepConfig:
    cfg = SweepConfig.from_yaml(args.config.read_text())
    overrides = {}
    for flag, key in (("kind", "kinds"), ("p", "p_grid"), ("L", "L_list"), ("trajectories", "trajectories"),
                      ("seed", "master_seed"), ("out", "out")):
        if getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)
    env = os.environ.get(WORKERS_ENV)
    if args.workers is not None:
        overrides["workers"] = args.workers
    elif env:
        overrides["workers"] = int(env)
    return replace(cfg, **overrides)


def _write_table(rows, path):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in r.items()})
    finally:
        if path:
            fh.close()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "sweep":
        try:
            cfg = resolve_sweep_config(args)
        except (ConfigError, CapacityError, ValueError) as err:
            print(f"config error: {err}", file=sys.stderr)
            return 2
        if args.dump_config:
            print(cfg.to_yaml(), end="")
            return 0
        _, crossings = run_sweep(cfg, progress=args.verbose)
        print(json.dumps(crossings, indent=2))
        return 0
    if args.command == "verify":
        checks = verification_report(n_random=args.n_random)
        ok = report_passed(checks)
        text = json.dumps({"passed": ok, "checks": checks}, indent=2)
        if args.out:
            args.out.write_text(text + "\n")
        print(text)
        return 0 if ok else 1
    if args.command == "bell-proxy":
        rows = read_rows(args.sweep) if args.sweep else None
        _write_table(bell_proxy_table(args.grid, rows), args.out)
        return 0
    if args.command == "crossing":
        rows = read_rows(args.infile)
        print(json.dumps(crossings_from_rows(rows, n_boot=args.n_boot, master_seed=args.seed), indent=2))
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
