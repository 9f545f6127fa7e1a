"""Batch front-end: ``fockrg run|compare|scan --config FILE``."""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .feshbach import FeshbachError
from .fock import dump_vector, export_eigenpair
from .initial import InitialSeriesConfig, ToyModel
from .kernel_space import RadialGrid
from .rg import BallViolation, NewtonError, RGConfig, invert_E
from .solver import (ConditionViolation, SolverConfig, beta_smoothness_scan, g_expansion,
                     ground_state, oracle_ground_state, overlap)

EXIT_CONFIG = 1
EXIT_CERTIFICATE = 2
EXIT_NUMERICAL = 3
OUT_ENV = "FOCKRG_OUT"


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "model": {"g": complex, "beta": float, "coupling": float, "linear": float, "cutoff": float,
              "atom_dim": int, "g_max": float},
    "grids": {"r_nodes": int, "k_nodes": int, "per_panel": int, "grading": float},
    "rg": {"rho": float, "xi": float, "l_max": int, "l_int": int, "m_max_sector": int,
           "m_max": int, "n_z": int, "radius": float, "full_steps": int, "psi_cap": int},
    "oracle": {"n_ph_max": int, "n_modes": int, "energy_tol": float, "overlap_min": float},
    "scan": {"beta_h": float, "beta_points": int, "beta_step": float, "derivative_order": int,
             "g_radius": float, "g_points": int, "g_orders": int, "rho_values": str},
    "output": {"dir": str, "formats": str},
}


@dataclass
class RunConfig:
    model: ToyModel
    grid: RadialGrid
    solver: SolverConfig
    oracle: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    out_dir: Path = Path("fockrg-out")
    formats: tuple = ("jsonl", "csv", "npz")
    source: str = ""

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "solver": self.solver.to_dict(), "oracle": self.oracle,
                "scan": self.scan, "formats": list(self.formats)}


def _line_of(text: str, section: str, key: str | None) -> int:
    cur = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip().lower()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None and "=" in s and s.split("=", 1)[0].strip().lower() == key:
            return i
    return 0


def _convert(kind, raw: str):
    raw = raw.strip()
    if kind is complex:
        return complex(raw.replace(" ", "").replace("i", "j"))
    return kind(raw)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", 0)
        raise ConfigError(f"{source}:{line}: {exc.message if hasattr(exc, 'message') else exc}") from exc

    vals: dict = {s: {} for s in _SCHEMA}
    for section in cp.sections():
        sec = section.lower()
        if sec not in _SCHEMA:
            raise ConfigError(f"{source}:{_line_of(text, sec, None)}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"{source}:{_line_of(text, sec, key)}: unknown key {key!r} in [{section}]")
            try:
                vals[sec][key] = _convert(_SCHEMA[sec][key], raw)
            except ValueError:
                raise ConfigError(f"{source}:{_line_of(text, sec, key)}: cannot read {key} = {raw!r}") from None

    def where(sec, key):
        return f"{source}:{_line_of(text, sec, key)}"

    def check(cond, sec, key, msg):
        if not cond:
            raise ConfigError(f"{where(sec, key)}: {msg}")

    m, gr, rg, orc = vals["model"], vals["grids"], vals["rg"], vals["oracle"]
    g = m.get("g", 0.05)
    g_max = m.get("g_max", 0.1)
    check(0.0 < g_max <= 0.1, "model", "g_max", "g_max must lie in (0, 0.1]")
    check(abs(g) <= g_max, "model", "g", f"|g| must not exceed g_max = {g_max}")
    check(0.0 < m.get("cutoff", 1.0) <= 1.0, "model", "cutoff", "cutoff must lie in (0, 1]")
    check(m.get("atom_dim", 2) >= 2, "model", "atom_dim", "atom_dim must be at least 2")
    check(abs(m.get("coupling", 0.04)) <= 0.1, "model", "coupling", "coupling must satisfy |coupling| <= 0.1")
    check(abs(m.get("linear", 0.04)) <= 0.1, "model", "linear", "linear must satisfy |linear| <= 0.1")
    check(gr.get("r_nodes", 33) >= 3, "grids", "r_nodes", "need at least 3 r-nodes")
    check(gr.get("k_nodes", 16) % gr.get("per_panel", 4) == 0, "grids", "k_nodes",
          "k_nodes must be a multiple of per_panel")
    check(gr.get("grading", 2.0) > 1.0, "grids", "grading", "grading must exceed 1")
    check(0.0 < rg.get("rho", 0.1) <= 0.25, "rg", "rho", "rho must lie in (0, 1/4]")
    check(0.0 < rg.get("xi", 0.2) <= 0.25, "rg", "xi", "xi must lie in (0, 1/4]")
    check(0.0 < rg.get("radius", 0.3) < 0.5, "rg", "radius", "contour radius must lie in (0, 1/2)")
    check(rg.get("m_max", 10) >= 1, "rg", "m_max", "m_max must be at least 1")
    check(rg.get("l_max", 4) >= 2, "rg", "l_max", "l_max must be at least 2")
    check(1 <= rg.get("l_int", 2) <= rg.get("l_max", 4), "rg", "l_int", "need 1 <= l_int <= l_max")
    check(rg.get("m_max_sector", 2) >= 2, "rg", "m_max_sector", "m_max_sector must be at least 2")
    check(orc.get("n_ph_max", 3) >= 1, "oracle", "n_ph_max", "n_ph_max must be at least 1")
    check(orc.get("n_modes", gr.get("k_nodes", 16)) % gr.get("per_panel", 4) == 0, "oracle", "n_modes",
          "n_modes must be a multiple of per_panel")

    try:
        model = ToyModel(g=g, beta=m.get("beta", 0.0), coupling=m.get("coupling", 0.04),
                         linear=m.get("linear", 0.04), cutoff=m.get("cutoff", 1.0),
                         atom_dim=m.get("atom_dim", 2))
        grid = RadialGrid(gr.get("r_nodes", 33), gr.get("k_nodes", 16), gr.get("per_panel", 4),
                          gr.get("grading", 2.0))
        xi = rg.get("xi", 0.2)
        rgc = RGConfig(rho=rg.get("rho", 0.1), xi=xi, L_max=rg.get("l_max", 4), L_int=rg.get("l_int", 2),
                       M_max=rg.get("m_max_sector", 2), n_z=rg.get("n_z", 16), radius=rg.get("radius", 0.3))
        ini = InitialSeriesConfig(L_max=rg.get("l_max", 4), L_int=rg.get("l_int", 2),
                                  M_max=rg.get("m_max_sector", 2), xi=xi, n_z=rg.get("n_z", 16),
                                  radius=rg.get("radius", 0.3), grid=grid, g_max=g_max)
        solver = SolverConfig(ini, rgc, rg.get("m_max", 10), rg.get("full_steps"), rg.get("psi_cap", 3))
    except ValueError as exc:
        raise ConfigError(f"{source}:0: {exc}") from exc

    oracle = {"n_ph_max": orc.get("n_ph_max", 3), "n_modes": orc.get("n_modes", grid.n_k),
              "energy_tol": orc.get("energy_tol", 5e-4), "overlap_min": orc.get("overlap_min", 0.999)}
    sc = vals["scan"]
    scan = {"beta_h": sc.get("beta_h", 0.1), "beta_points": sc.get("beta_points", 9),
            "beta_step": sc.get("beta_step"), "derivative_order": sc.get("derivative_order", 2),
            "g_radius": sc.get("g_radius", 0.05), "g_points": sc.get("g_points", 8),
            "g_orders": sc.get("g_orders", 6),
            "rho_values": [float(v) for v in str(sc.get("rho_values", "0.05, 0.1, 0.2")).split(",") if v.strip()]}
    check(0 <= scan["derivative_order"] <= 4, "scan", "derivative_order", "derivative order must be in 0..4")
    check(0.0 < scan["g_radius"] <= g_max, "scan", "g_radius", "g_radius must lie in (0, g_max]")
    check(scan["g_orders"] < scan["g_points"], "scan", "g_orders", "need g_orders < g_points")
    for v in scan["rho_values"]:
        check(0.0 < v <= 0.25, "scan", "rho_values", "every rho must lie in (0, 1/4]")
    out = vals["output"]
    formats = tuple(f.strip() for f in out.get("formats", "jsonl, csv, npz").split(",") if f.strip())
    for f in formats:
        check(f in ("jsonl", "csv", "npz"), "output", "formats", f"unknown format {f!r}")
    return RunConfig(model, grid, solver, oracle, scan, Path(out.get("dir", "fockrg-out")), formats, source)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))


# output helpers

def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def _plot_data(path: Path, x, y) -> None:
    _write_csv(path, [{"x": float(a), "y": float(b)} for a, b in zip(x, y)])


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    d = Path(override or os.environ.get(OUT_ENV) or cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def fixed_point_spot_check(kernels, rho: float, rng: np.random.Generator, n: int = 20) -> float:
    """max |E(I(z)) / rho - z| over random z in the half disc, all steps."""
    worst = 0.0
    for w in kernels[:-1]:
        for _ in range(n):
            z = 0.5 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
            worst = max(worst, invert_E(w, rho, z).residual)
    return worst


def _summary_rows(gs, spot: float, rho: float) -> list[dict]:
    e = gs.energy
    return [
        {"quantity": "E_re", "value": float(np.real(gs.E)), "error": e.measured_error, "bound": e.error_bar},
        {"quantity": "E_im", "value": float(np.imag(gs.E)), "error": e.measured_error, "bound": e.error_bar},
        {"quantity": "residual", "value": gs.residual, "error": 0.0, "bound": 1e-3},
        {"quantity": "psi_norm", "value": gs.eigen.norms[-1] if gs.eigen else float("nan"),
         "error": 0.0, "bound": 4 * np.e**4},
        {"quantity": "eps0", "value": gs.trace.eps0, "error": 0.0, "bound": rho / 32},
        {"quantity": "fixed_point_residual", "value": spot, "error": 0.0, "bound": 1e-12},
    ]


def _write_run(cfg: RunConfig, out: Path, gs, spot: float) -> None:
    if "jsonl" in cfg.formats:
        gs.trace.to_jsonl(out / "trace.jsonl")
    if "csv" in cfg.formats:
        rows = _summary_rows(gs, spot, cfg.solver.rg.rho)
        _write_csv(out / "summary.csv", rows)
        e = gs.energy
        _write_csv(out / "energies.csv", [
            {"m": m, "e_re": float(v.real), "e_im": float(v.imag),
             "increment": float(abs(v - e.iterates[m - 1])) if m else 0.0,
             "schedule": 2.0 ** (-m - 1)} for m, v in enumerate(e.iterates)])
        _plot_data(out / "plot_energy_iterates.csv", range(len(e.iterates)), [v.real for v in e.iterates])
        if gs.eigen is not None:
            _plot_data(out / "plot_residuals.csv", range(len(gs.eigen.residuals)), gs.eigen.residuals)
    if "npz" in cfg.formats and gs.eigen is not None:
        dump_vector(out / "psi.npz", gs.psi, {"energy": [float(np.real(gs.E)), float(np.imag(gs.E))],
                                              "atom_dim": cfg.model.atom_dim,
                                              "n_ph_max": gs.space.n_ph_max,
                                              "grid": gs.space.grid.to_dict(), "layout": "atom-major"})
        export_eigenpair(out / "eigenpair.json", gs.E, gs.psi, gs.residual)


# commands

def cmd_run(cfg: RunConfig, out: Path, seed: int = 0) -> int:
    gs = ground_state(cfg.model, cfg.solver)
    spot = fixed_point_spot_check(gs.kernels, cfg.solver.rg.rho, np.random.default_rng(seed))
    _write_run(cfg, out, gs, spot)
    e = gs.energy
    print(f"E        = {np.real(gs.E):.15e} {np.imag(gs.E):+.3e}i")
    print(f"error    = {e.measured_error:.3e} (measured tails + last increment), "
          f"{e.error_bar:.3e} (schedule bound + tails)")
    print(f"residual = {gs.residual:.3e}")
    print(f"fixed-point spot check = {spot:.3e}")
    return 0


def cmd_compare(cfg: RunConfig, out: Path, seed: int = 0) -> int:
    if abs(complex(cfg.model.g).imag) > 0:
        raise ConfigError(f"{cfg.source}:{_line_of(Path(cfg.source).read_text(), 'model', 'g')}: "
                          "compare needs a real coupling g")
    gs = ground_state(cfg.model, cfg.solver)
    grid = cfg.grid
    ref_grid = grid if cfg.oracle["n_modes"] == grid.n_k else RadialGrid(
        grid.n_r, cfg.oracle["n_modes"], grid.per_panel, grid.ratio)
    E_ref, v_ref, _ = oracle_ground_state(cfg.model, cfg.oracle["n_ph_max"], ref_grid)
    # the photon cap is a truncation of its own; report how much one more photon moves E
    E_cap, _, _ = oracle_ground_state(cfg.model, cfg.oracle["n_ph_max"] + 1, ref_grid)
    if ref_grid == grid and cfg.oracle["n_ph_max"] == gs.space.n_ph_max:
        v_same = v_ref
    else:
        _, v_same, _ = oracle_ground_state(cfg.model, gs.space.n_ph_max, grid)
    gap = abs(gs.E - E_ref)
    rel = gap / abs(E_ref) if E_ref != 0 else gap
    ov = overlap(gs.psi, v_same)
    ok = rel <= cfg.oracle["energy_tol"] and ov >= cfg.oracle["overlap_min"]
    rows = [{"quantity": "E_rg", "value": float(np.real(gs.E)), "error": gs.energy.measured_error},
            {"quantity": "E_oracle", "value": float(E_ref), "error": 0.0},
            {"quantity": "abs_gap", "value": float(gap), "error": gs.energy.measured_error},
            {"quantity": "rel_gap", "value": float(rel), "error": cfg.oracle["energy_tol"]},
            {"quantity": "overlap", "value": ov, "error": 1.0 - cfg.oracle["overlap_min"]},
            {"quantity": "residual", "value": gs.residual, "error": 0.0},
            {"quantity": "cap_delta", "value": float(abs(E_cap - E_ref)), "error": 0.0}]
    if "csv" in cfg.formats:
        _write_csv(out / "compare.csv", rows)
    if "jsonl" in cfg.formats:
        gs.trace.to_jsonl(out / "trace.jsonl")
    print(f"E_RG     = {np.real(gs.E):.15e}")
    print(f"E_oracle = {E_ref:.15e}  (n_modes={ref_grid.n_k}, n_ph_max={cfg.oracle['n_ph_max']})")
    print(f"|gap|    = {gap:.3e}  relative {rel:.3e}  (budget {cfg.oracle['energy_tol']:.1e})")
    print(f"overlap  = {ov:.12f}  (budget {cfg.oracle['overlap_min']})")
    print(f"cap+1    = {abs(E_cap - E_ref):.3e}  (oracle shift from n_ph_max={cfg.oracle['n_ph_max'] + 1})")
    print("budgets met" if ok else "BUDGET EXCEEDED")
    return 0 if ok else EXIT_NUMERICAL


def cmd_scan(cfg: RunConfig, out: Path, kind: str, threads: int = 1) -> int:
    sc = cfg.scan
    fast = cfg.solver if cfg.solver.full_steps is not None else cfg.solver.energy_only()
    if kind == "beta":
        h = sc["beta_h"]
        step = sc["beta_step"] or h / 2
        grid = cfg.model.beta + step * np.arange(sc["beta_points"])
        res = beta_smoothness_scan(cfg.model, fast, sc["derivative_order"], grid, h, threads)
        rows = res.rows()
        _write_csv(out / "beta_scan.csv", rows)
        _plot_data(out / "plot_beta_E.csv", res.beta, res.energy.real)
        for l in res.derivatives:
            _plot_data(out / f"plot_beta_d{l}.csv", res.beta, res.derivatives[l].real)
        print(f"beta scan: {len(rows)} points, derivative bound {res.bound:.3e}")
        for l in sorted(res.derivatives):
            print(f"  order {l}: relative h-halving change {res.relative_stability(l):.3e}")
        return 0
    if kind == "g":
        res = g_expansion(cfg.model, fast, sc["g_orders"], sc["g_radius"], sc["g_points"], True, threads)
        _write_csv(out / "g_coefficients.csv", res.rows())
        _plot_data(out / "plot_g_coefficients.csv", range(res.coefficients.size), np.abs(res.coefficients))
        _write_csv(out / "g_contour.csv", [{"g_re": float(g.real), "g_im": float(g.imag),
                                            "E_re": float(e.real), "E_im": float(e.imag),
                                            "overlap": float(o)}
                                           for g, e, o in zip(res.g, res.energy, res.overlaps)])
        print(f"g expansion: odd/even ratio {res.odd_ratio():.3e}, min overlap {res.overlaps.min():.6f}")
        for r in res.rows():
            print(f"  E^({r['n']}) = {r['re']:+.6e} {r['im']:+.2e}i")
        return 0
    if kind == "rho":
        rows = []
        for rho in sc["rho_values"]:
            rgc = RGConfig(**{**cfg.solver.rg.to_dict(), "rho": rho})
            gs = ground_state(cfg.model, SolverConfig(cfg.solver.initial, rgc, cfg.solver.m_max,
                                                      fast.full_steps, cfg.solver.psi_cap), vectors=False)
            rows.append({"rho": rho, "E_re": float(np.real(gs.E)), "E_im": float(np.imag(gs.E)),
                         "error": gs.energy.measured_error})
        base = rows[0]
        ok = True
        for r in rows:
            r["diff"] = abs(r["E_re"] - base["E_re"])
            r["budget"] = r["error"] + base["error"]
            ok &= r["diff"] <= r["budget"]
        _write_csv(out / "rho_scan.csv", rows)
        _plot_data(out / "plot_rho_E.csv", [r["rho"] for r in rows], [r["E_re"] for r in rows])
        for r in rows:
            print(f"  rho = {r['rho']:<5} E = {r['E_re']:.15e}  |dE| = {r['diff']:.2e}  budget {r['budget']:.2e}")
        print("budgets met" if ok else "BUDGET EXCEEDED")
        return 0 if ok else EXIT_NUMERICAL
    raise ConfigError(f"unknown scan {kind!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fockrg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "compare", "scan"):
        s = sub.add_parser(name)
        if name == "scan":
            s.add_argument("scan", choices=["beta", "g", "rho"])
        s.add_argument("--config", required=True, metavar="PATH")
        s.add_argument("--out", metavar="DIR", default=None)
        s.add_argument("--threads", type=int, default=1, metavar="N")
        s.add_argument("--seed", type=int, default=0, metavar="N")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = _out_dir(cfg, args.out)
        if args.command == "run":
            return cmd_run(cfg, out, args.seed)
        if args.command == "compare":
            return cmd_compare(cfg, out, args.seed)
        return cmd_scan(cfg, out, args.scan, max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BallViolation, ConditionViolation) as exc:
        print(f"certificate violation: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except NewtonError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ArithmeticError as exc:
        print(f"certificate violation: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except (FeshbachError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
