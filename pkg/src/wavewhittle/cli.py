"""Command-line front end, CSV panels and JSON reports.

Subcommands::

    wavewhittle analyze panel.csv -o report.json
    wavewhittle simulate spec.json -o panel.csv
    wavewhittle mc spec.json --replicates 200 -o summary.json
    wavewhittle kernels --M 4 --deltas 0,0.4 --max-gap 4 -o table.json

Every command exits with status 0 on success.  On failure it writes a
machine-readable error record to stderr (and to the output path, if one was
given) and exits with status 2.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyFile, ParseError, WaveWhittleError
from .wavelets import TimeSeriesPanel

REPORT_SCHEMA = "wavewhittle.report/1"


# ---------------------------------------------------------------------------
# CSV


def parse_panel_csv(text: str) -> TimeSeriesPanel:
    if not text.strip():
        raise EmptyFile("input has no content")
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    header = [c.strip() for c in rows[0]]
    if any(not c for c in header):
        raise ParseError("empty column name in header", row=1, column=header.index("") + 1)
    p = len(header)
    body = rows[1:]
    if not body:
        raise EmptyFile("header present but no data rows")
    values = np.empty((len(body), p))
    for i, row in enumerate(body, start=2):
        if len(row) != p:
            raise ParseError(f"expected {p} fields, found {len(row)}", row=i)
        for k, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell.strip()!r}", row=i, column=k + 1) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite cell {cell.strip()!r}", row=i, column=k + 1)
            values[i - 2, k] = v
    return TimeSeriesPanel(values, tuple(header))


def load_panel_csv(path) -> TimeSeriesPanel:
    """Read a comma-separated panel with a header row of component names."""
    return parse_panel_csv(Path(path).read_text(encoding="utf-8"))


def write_panel_csv(panel: TimeSeriesPanel, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(panel.component_names)
    for row in panel.values:
        w.writerow([f"{v:.17g}" for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# report serialization


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    return obj


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return f"{obj:.17g}" if math.isfinite(obj) else "null"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(doc: dict, indent: int = 1) -> str:
    """JSON text with every float written to 17 significant digits.

    Non-finite floats become ``null``.
    """
    return _emit(_plain(doc), indent, 0) + "\n"


def loads_report(text: str) -> dict:
    return json.loads(text)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class AnalysisConfig:
    input_path: str | None = None
    j0: int = 3
    j1: int | None = None
    delta: int | None = None
    M: int = 4
    quad_tolerance: float = 1e-9
    trunc_terms: int = 100
    product_depth: int = 30
    ci_level: float = 0.95
    delta_mode: str = "finite"
    output_path: str | None = None
    seed: int = 0
    joint_max_p: int = 10

    def validate(self) -> None:
        if self.j0 < 1:
            raise ValueError("j0 must be >= 1 (level 1 is the first decimation stage)")
        if self.j1 is not None and self.j1 <= self.j0:
            raise ValueError("j1 must exceed j0")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")
        if not 2 <= self.M <= 10:
            raise ValueError("M must lie in [2, 10]")
        if self.delta_mode not in ("finite", "infinite"):
            raise ValueError("delta_mode must be 'finite' or 'infinite'")

    @classmethod
    def merged(cls, file_doc: dict | None, overrides: dict) -> "AnalysisConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        kw = {k: v for k, v in (file_doc or {}).items() if k in names}
        kw.update({k: v for k, v in overrides.items() if k in names and v is not None})
        cfg = cls(**kw)
        cfg.validate()
        return cfg


def _table_for(cfg: AnalysisConfig):
    from .kernels import default_table

    return default_table(cfg.M, quad_tolerance=cfg.quad_tolerance, trunc_terms=cfg.trunc_terms,
                         product_depth=cfg.product_depth)


def _histogram(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {"values": [], "edges": [], "counts": []}
    counts, edges = np.histogram(values, bins="auto" if values.size > 1 else 1)
    return {"values": values, "edges": edges, "counts": counts}


def _qq(z: np.ndarray) -> dict:
    from scipy import stats

    z = np.sort(np.asarray(z, dtype=float))
    q = stats.norm.ppf((np.arange(1, z.size + 1) - 0.5) / z.size)
    return {"theoretical": q, "sample": z}


def _kernel_provenance(table) -> dict:
    errs = [v for v in table.errors.values()]
    return {
        "family": table.family.name,
        "vanishing_moments": table.family.vanishing_moments,
        "regularity": table.family.regularity,
        "quad_tolerance": table.quad_tolerance,
        "trunc_terms": table.trunc_terms,
        "product_depth": table.product_depth,
        "cheb_nodes": table.cheb_nodes,
        "max_error_estimate": max(errs) if errs else 0.0,
    }


def analysis_report(panel: TimeSeriesPanel, cfg: AnalysisConfig) -> dict:
    from .estimation import scale_correlations
    from .inference import fit

    table = _table_for(cfg)
    modes = ("finite", "infinite") if cfg.delta_mode == "finite" else ("infinite", "finite")
    joint = panel.p <= cfg.joint_max_p
    res = fit(panel, j0=cfg.j0, j1=cfg.j1, M=cfg.M, Delta=cfg.delta, table=table, modes=modes, joint=joint)
    cs = res.cov_set
    corr = scale_correlations(cs)
    p = panel.p
    iu = np.triu_indices(p, 1)
    inference = {}
    for mode, acov in res.asymptotics.items():
        ci = res.intervals(cfg.ci_level, mode)
        inference[mode] = {
            "Delta": acov.Delta if math.isfinite(acov.Delta) else "inf",
            "d_sd": ci["d"].sd, "d_lower": ci["d"].lower, "d_upper": ci["d"].upper,
            "d_cov": acov.W_d,
            "G_sd": ci["G"].sd,
            "r_sd": ci["r"].sd, "r_lower": ci["r"].lower, "r_upper": ci["r"].upper,
        }
    trace = res.optimizer_trace.to_record()
    if not joint:
        trace.pop("path")
    return {
        "schema": REPORT_SCHEMA,
        "kind": "analysis",
        "status": "ok",
        "config": dataclasses.asdict(cfg),
        "data": {
            "N_X": panel.N_X, "p": p, "component_names": list(panel.component_names),
            "n": cs.n, "j0": cs.j0, "j1": cs.j1, "mean_scale": cs.mean_scale,
        },
        "scales": [
            {"j": int(j), "n_j": cs.counts[j], "sigma_hat": cs.sigma_hat[j], "rho_hat": corr[j]}
            for j in cs.scales
        ],
        "estimates": {
            "d_hat": res.d_hat, "G_hat": res.G_hat, "omega_hat": res.omega_hat, "r_hat": res.r_hat,
            "criterion": res.criterion_value, "boundary_hit": res.optimizer_trace.boundary_hit,
        },
        "inference": inference,
        "ci_level": cfg.ci_level,
        "joint_covariance": res.joint_cov if joint else None,
        "joint_covariance_note": None if joint else f"omitted for p > {cfg.joint_max_p}",
        "optimizer": trace,
        "kernel_table": _kernel_provenance(table),
        "plots": {
            "d_hat_histogram": _histogram(res.d_hat),
            "r_hat_histogram": _histogram(res.r_hat[iu]),
        },
    }


def mc_report(summary, spec, cfg) -> dict:
    from .asymptotics import d_asym_cov, r_asym_var_matrix
    from .kernels import INF, default_table
    from .simulation import _true_G

    table = default_table(cfg.M)
    G0 = _true_G(spec, table)
    n = summary.n
    sd_inf = np.sqrt(np.diag(d_asym_cov(summary.d_true, G0, INF, table)) / n)
    rows = []
    for a in range(spec.p):
        rows.append({
            "parameter": f"d_{a + 1}",
            "theoretical_sd_finite": summary.theoretical_sd["d"][a] / math.sqrt(n),
            "theoretical_sd_infinite": sd_inf[a],
            "observed_sd": summary.empirical_sd["d"][a] / math.sqrt(n),
        })
    if "r" in summary.theoretical_sd:
        s0 = np.sqrt(np.diag(G0))
        rinf = r_asym_var_matrix(summary.d_true, G0 / np.outer(s0, s0), INF, table)
        iu = np.triu_indices(spec.p, 1)
        for k, (a, b) in enumerate(zip(*iu)):
            rows.append({
                "parameter": f"r_{a + 1}{b + 1}",
                "theoretical_sd_finite": summary.theoretical_sd["r"][k] / math.sqrt(n),
                "theoretical_sd_infinite": math.sqrt(rinf[a, b] / n),
                "observed_sd": summary.empirical_sd["r"][k] / math.sqrt(n),
            })
    z = math.sqrt(n) * (summary.d_hat - summary.d_true) / summary.theoretical_sd["d"]
    return {
        "schema": REPORT_SCHEMA,
        "kind": "monte_carlo",
        "status": "ok",
        "spec": spec.to_dict(),
        "estimation": dataclasses.asdict(cfg),
        "summary": summary.to_record(),
        "sd_table": rows,
        "plots": {
            "d_hat_histogram": [_histogram(summary.d_hat[:, a]) for a in range(spec.p)],
            "d_standardized_qq": [_qq(z[:, a]) for a in range(spec.p)],
        },
    }


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: AnalysisConfig) -> dict:
    panel = load_panel_csv(cfg.input_path)
    return analysis_report(panel, cfg)


def cmd_simulate(spec_doc: dict, output: str, seed: int | None = None) -> None:
    from .simulation import SimulationSpec, simulate_mvlm

    if seed is not None:
        spec_doc = dict(spec_doc, seed=seed)
    spec = SimulationSpec.from_dict(spec_doc)
    panel = simulate_mvlm(spec)
    names = spec_doc.get("component_names") or [f"X{i + 1}" for i in range(spec.p)]
    write_panel_csv(TimeSeriesPanel(panel.values, tuple(names)), output)


def cmd_mc(spec_doc: dict, replicates: int, est_doc: dict | None = None, workers: int | None = None) -> dict:
    from .simulation import EstimationConfig, SimulationSpec, monte_carlo

    spec = SimulationSpec.from_dict(spec_doc)
    names = {f.name for f in dataclasses.fields(EstimationConfig)}
    cfg = EstimationConfig(**{k: v for k, v in (est_doc or {}).items() if k in names and v is not None})
    summary = monte_carlo(spec, replicates, cfg, workers=workers)
    return mc_report(summary, spec, cfg)


def cmd_kernels(M: int, deltas, max_gap: int, quad_tolerance: float = 1e-9) -> str:
    from .kernels import KernelTable
    from .wavelets import build_daubechies_filters

    table = KernelTable(build_daubechies_filters(M), quad_tolerance=quad_tolerance)
    deltas = np.asarray(deltas, dtype=float)
    table.K(deltas)
    for u in range(max_gap + 1):
        table.tilde_I_matrix(u, deltas, deltas)
    return table.to_json()


# ---------------------------------------------------------------------------
# argument parsing


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", row=exc.lineno, column=exc.colno) from None


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wavewhittle", description="Multivariate wavelet Whittle estimation.")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate d, G, Omega and r from a CSV panel")
    a.add_argument("input_path", nargs="?")
    a.add_argument("--config", help="JSON file with AnalysisConfig fields; flags override it")
    a.add_argument("--j0", type=int)
    a.add_argument("--j1", type=int)
    a.add_argument("--delta", type=int, help="scale range used in the finite variance (default j1 - j0)")
    a.add_argument("--M", type=int, help="Daubechies vanishing moments")
    a.add_argument("--quad-tolerance", dest="quad_tolerance", type=float)
    a.add_argument("--trunc-terms", dest="trunc_terms", type=int)
    a.add_argument("--product-depth", dest="product_depth", type=int)
    a.add_argument("--ci-level", dest="ci_level", type=float)
    a.add_argument("--delta-mode", dest="delta_mode", choices=("finite", "infinite"))
    a.add_argument("--joint-max-p", dest="joint_max_p", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("-o", "--output", dest="output_path")

    s = sub.add_parser("simulate", help="draw one panel from a simulation spec")
    s.add_argument("spec")
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output", required=True)

    m = sub.add_parser("mc", help="Monte Carlo study of a simulation spec")
    m.add_argument("spec")
    m.add_argument("--replicates", type=int, default=200)
    m.add_argument("--j0", type=int)
    m.add_argument("--j1", type=int)
    m.add_argument("--delta", dest="Delta", type=int)
    m.add_argument("--M", type=int)
    m.add_argument("--ci-level", dest="level", type=float)
    m.add_argument("--workers", type=int, help="process count (default from WAVEWHITTLE_THREADS)")
    m.add_argument("-o", "--output")

    k = sub.add_parser("kernels", help="evaluate and dump a kernel table")
    k.add_argument("--M", type=int, default=4)
    k.add_argument("--deltas", default="0", help="comma-separated delta values")
    k.add_argument("--max-gap", dest="max_gap", type=int, default=4)
    k.add_argument("--quad-tolerance", dest="quad_tolerance", type=float, default=1e-9)
    k.add_argument("-o", "--output")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = getattr(args, "output_path", None) or getattr(args, "output", None)
    try:
        if args.command == "analyze":
            file_doc = _read_json(args.config) if args.config else None
            cfg = AnalysisConfig.merged(file_doc, vars(args))
            if not cfg.input_path:
                raise ValueError("no input path given")
            _write(dumps_report(cmd_analyze(cfg)), cfg.output_path)
        elif args.command == "simulate":
            cmd_simulate(_read_json(args.spec), args.output, args.seed)
        elif args.command == "mc":
            est = {k: getattr(args, k) for k in ("j0", "j1", "Delta", "M", "level")}
            _write(dumps_report(cmd_mc(_read_json(args.spec), args.replicates, est, args.workers)), args.output)
        elif args.command == "kernels":
            deltas = [float(x) for x in args.deltas.split(",") if x.strip()]
            _write(cmd_kernels(args.M, deltas, args.max_gap, args.quad_tolerance), args.output)
    except (WaveWhittleError, ValueError, OSError) as exc:
        if isinstance(exc, WaveWhittleError):
            rec = exc.to_record()
        else:
            rec = {"error": type(exc).__name__, "message": str(exc)}
        doc = {"schema": REPORT_SCHEMA, "status": "error", "error": rec}
        text = dumps_report(doc)
        sys.stderr.write(text)
        if out and args.command != "simulate":
            try:
                Path(out).write_text(text, encoding="utf-8")
            except OSError:
                pass
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
