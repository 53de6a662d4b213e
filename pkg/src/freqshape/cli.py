"""Command-line runner: ``freqshape {validate,simulate,modes,sweep,metrics,reduced}``.

Exit codes: 0 success, 2 validation failure, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfg
from . import metrics as mx
from . import reduced_models as rm
from .network import NetworkError, PowerFlowError
from .smallsignal import (ClassificationError, DefectiveMatrixError, EquilibriumError, dominant,
                          modal_analysis, modes_to_csv)
from .timedomain import EventError, SimulationError, simulate

log = logging.getLogger("freqshape")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
RUNTIME_ERRORS = (SimulationError, PowerFlowError, NetworkError, EventError, EquilibriumError,
                  DefectiveMatrixError, ClassificationError, ArithmeticError, RuntimeError, ValueError)


@dataclass
class RunReport:
    scenario: str
    config_hash: str
    subcommand: str
    metrics: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    files: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        out = [f"scenario: {self.scenario}", f"config: {self.config_hash}",
               f"subcommand: {self.subcommand}"]
        if self.metrics:
            out.append("metrics:")
            for row in self.metrics:
                out.append("  " + ", ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
        if self.modes:
            out.append("modes:")
            for row in self.modes:
                out.append("  " + ", ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
        for n in self.notes:
            out.append(f"note: {n}")
        out.append("files: " + ", ".join(self.files + ["report.txt"]))
        return "\n".join(out) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _header(doc, h):
    return f"freqshape scenario={doc.get('name', 'scenario')} config={h}"


def _write_rows(path, header, rows, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else r[c]
                    for c in columns])
    Path(path).write_text(buf.getvalue())


# --------------------------------------------------------------------------- pipelines

def _scenario(doc):
    if "network" not in doc:
        raise cfg.ConfigError([cfg.Diagnostic("network", "this subcommand needs a network "
                                                         "(use 'reduced' or 'sweep')", "missing")])
    return cfg.document_to_scenario(doc)


def _metric_settings(doc, sc):
    m = dict(doc.get("analyses", {}).get("metrics", {}))
    if "t_dist_s" not in m:
        m["t_dist_s"] = sc.events[0].t if sc.events else 0.0
    if "frequency_channel" not in m:
        m["frequency_channel"] = f"f_{sc.units[0].name}"
    if "power_channel" not in m:
        conv = [u for u in sc.units if u.kind == "gfor"]
        m["power_channel"] = f"dP_{conv[0].name}_MW" if conv else None
    return m


def metrics_row(doc, res) -> dict:
    sc = cfg.document_to_scenario(doc)
    m = _metric_settings(doc, sc)
    for key in ("frequency_channel", "power_channel"):
        ch = m[key]
        if ch is not None and ch not in res.channels:
            raise cfg.ConfigError([cfg.Diagnostic(f"analyses.metrics.{key}",
                                                  f"unknown channel {ch!r}", "reference")])
    windows = tuple(m.get("windows_s", mx.DEFAULT_WINDOWS))
    p = res[m["power_channel"]] if m["power_channel"] else None
    fm = mx.frequency_metrics(res.t, res[m["frequency_channel"]], p, m["t_dist_s"], windows=windows,
                              rocof_window=m.get("rocof_window_s", 0.5))
    row = {"nadir_Hz": fm.nadir, "max_abs_rocof_Hz_per_s": fm.max_abs_rocof,
           "rocof_time_s": fm.rocof_time, "f_steady_Hz": fm.f_steady}
    for w, v in fm.avg_power.items():
        row[f"avg_P_{w:g}s_MW"] = v
    return row


def _mode_rows(reports):
    rows = []
    for kind in ("Global", "Synchronisation"):
        r = dominant(reports, kind)
        if r is not None:
            rows.append({"class": kind, "real": float(r.eigenvalue.real),
                         "imag": float(r.eigenvalue.imag), "f_n_Hz": float(r.f_n),
                         "damping": float(r.damping),
                         **{f"pf_{k}": float(v) for k, v in r.frequency_pf.items()}})
    return rows


def run_simulate(doc, h, out: Path, with_metrics=False) -> RunReport:
    sc = _scenario(doc)
    res = simulate(sc)
    res.to_csv(out / "timeseries.csv", header=_header(doc, h))
    rep = RunReport(doc.get("name", "scenario"), h, "metrics" if with_metrics else "simulate",
                    files=["timeseries.csv"])
    for msg in res.meta.get("warnings", []):
        rep.notes.append(str(msg))
    if with_metrics:
        row = metrics_row(doc, res)
        _write_rows(out / "metrics.csv", _header(doc, h), [row])
        rep.metrics.append(row)
        rep.files.append("metrics.csv")
    return rep


def run_modes(doc, h, out: Path) -> RunReport:
    sc = _scenario(doc)
    step = doc.get("analyses", {}).get("modes", {}).get("h", 1e-6)
    _, ed, pf, reports = modal_analysis(sc, h=step)
    modes_to_csv(reports, out / "modes.csv", header=_header(doc, h), include_all=ed)
    pf.to_csv(out / "pf_matrix.csv", header=_header(doc, h))
    rep = RunReport(doc.get("name", "scenario"), h, "modes", files=["modes.csv", "pf_matrix.csv"])
    rep.modes = _mode_rows(reports)
    for r in reports:
        if r.dominant:
            shape = ", ".join(f"{k}: {abs(v):.3f}@{np.degrees(np.angle(v)):.1f}deg"
                              for k, v in r.shape.items())
            rep.notes.append(f"{r.classification} mode {r.mode} shape {shape}")
    return rep


def _sweep_cell(raw, overrides, path, value, modes):
    doc = cfg.resolve(raw, list(overrides) + [(path, value)])
    sc = cfg.document_to_scenario(doc)
    row = {"value": value, **metrics_row(doc, simulate(sc))}
    mrows = []
    if modes:
        _, _, _, reports = modal_analysis(sc, h=doc.get("analyses", {}).get("modes", {}).get("h", 1e-6))
        mrows = [{"value": value, **r} for r in _mode_rows(reports)]
    return row, mrows


def run_sweep(raw, overrides, doc, h, out: Path, jobs=1) -> RunReport:
    rep = RunReport(doc.get("name", "scenario"), h, "sweep")
    if "network" not in doc:
        red = doc["reduced"]
        rows = [vars(c) for c in _reduced_sweep(red)]
        _write_rows(out / "metrics.csv", _header(doc, h), rows,
                    ["alpha", "beta", "nadir", "rocof", "nadir_ratio", "rocof_ratio"])
        rep.metrics = rows
        rep.files.append("metrics.csv")
        return rep
    sw = doc.get("analyses", {}).get("sweep")
    if sw is None:
        raise cfg.ConfigError([cfg.Diagnostic("analyses.sweep", "no sweep declared", "missing")])
    values = list(sw["values"])
    for v in values:  # validate every cell up front so bad grids fail with exit 2
        cfg.resolve(raw, list(overrides) + [(sw["set"], v)])
    args = [(raw, overrides, sw["set"], v, True) for v in values]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_star, args))
    else:
        results = [_sweep_star(a) for a in args]
    rows = [r for r, _ in results]
    mrows = [m for _, ms in results for m in ms]
    _write_rows(out / "metrics.csv", _header(doc, h), rows,
                ["value"] + (list(rows[0])[1:] if rows else []))
    mcols = ["value", "class", "real", "imag", "f_n_Hz", "damping"]
    extra = sorted({k for m in mrows for k in m if k.startswith("pf_")})
    for m in mrows:
        for k in extra:
            m.setdefault(k, float("nan"))
    _write_rows(out / "modes.csv", _header(doc, h), mrows, mcols + extra)
    rep.metrics, rep.modes = rows, mrows
    rep.files += ["metrics.csv", "modes.csv"]
    rep.notes.append(f"swept {sw['set']} over {len(values)} value(s)")
    return rep


def _sweep_star(a):
    return _sweep_cell(*a)


def _reduced_params(red):
    base = rm.SgReducedParams(H=red.get("H_s", 5.0), R_f_sg=red.get("R_f_sg_pu", 0.05),
                              tau_turb=red.get("tau_turb_s", 5.0), f0=red.get("f0_Hz", 50.0))
    return base


def _reduced_models(red):
    """``[(label, alpha, beta, transfer)]`` for every grid point of a reduced section."""
    base = _reduced_params(red)
    r_conv = red.get("R_f_conv_pu", 0.05)
    tau = red.get("tau_p_s", 0.1 if red["model"] == "gfor" else 0.25)
    out = []
    if red["model"] == "sg":
        return [("sg", 0.0, 0.0, rm.sg_transfer(base))]
    for a in red.get("alphas", [0.0]):
        if red["model"] == "gfor":
            out.append((f"a{a:g}", a, 0.0, rm.gfor_transfer(rm.GforReducedParams(base, a, r_conv, tau))))
        else:
            for b in red.get("betas", [1.0]):
                tf = rm.gfol_transfer(rm.GfolReducedParams(base, a, b, r_conv, tau),
                                      form=red.get("form", "expanded"))
                out.append((f"a{a:g}_b{b:g}", a, b, tf))
    return out


def _reduced_sweep(red):
    base = _reduced_params(red)
    r_conv = red.get("R_f_conv_pu", 0.05)
    alphas = red.get("alphas", [])
    if red["model"] == "gfol":
        p = rm.GfolReducedParams(base, 0.0, 1.0, r_conv, red.get("tau_p_s", 0.25))
        betas = red.get("betas", [1.0])
    elif red["model"] == "gfor":
        p = rm.GforReducedParams(base, 0.0, r_conv, red.get("tau_p_s", 0.1))
        betas = [0.0]
    else:
        raise cfg.ConfigError([cfg.Diagnostic("reduced.model", "sweeps need a gfol or gfor model",
                                              "physics")])
    if not alphas or not betas:
        return []
    return rm.penetration_sweep(alphas, betas, p, deltaP=red.get("deltaP_pu", 0.1),
                                t_end=red.get("t_end_s", 60.0), dt=red.get("dt_s", 0.005),
                                window=red.get("rocof_window_s", 0.5))


def run_reduced(doc, h, out: Path) -> RunReport:
    red = doc.get("reduced")
    if red is None:
        raise cfg.ConfigError([cfg.Diagnostic("reduced", "document has no reduced section", "missing")])
    dP = red.get("deltaP_pu", 0.1)
    t_end, dt, f0 = red.get("t_end_s", 60.0), red.get("dt_s", 0.005), red.get("f0_Hz", 50.0)
    models = _reduced_models(red)
    cols, rows = {}, []
    t = None
    for label, a, b, tf in models:
        resp = rm.step_response(tf, dP, t_end, dt)
        t = resp.t
        f = f0 * (1.0 + resp.y)
        cols[f"f_{label}_Hz"] = f
        roc = mx.rocof_moving_avg(f, dt, red.get("rocof_window_s", 0.5))
        rows.append({"model": red["model"], "alpha": a, "beta": b,
                     "initial_rocof_Hz_per_s": f0 * rm.initial_rocof(tf, dP),
                     "max_abs_rocof_Hz_per_s": roc.max_abs, "nadir_Hz": float(f.min()),
                     "f_steady_Hz": float(f0 * (1.0 + resp.final_value())),
                     "unstable": int(bool(resp.unstable))})
    buf = io.StringIO()
    buf.write(f"# {_header(doc, h)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + list(cols))
    for k in range(len(t)):
        w.writerow([repr(float(t[k]))] + [repr(float(c[k])) for c in cols.values()])
    (out / "timeseries.csv").write_text(buf.getvalue())
    _write_rows(out / "metrics.csv", _header(doc, h), rows)
    return RunReport(doc.get("name", "scenario"), h, "reduced", metrics=rows,
                     files=["timeseries.csv", "metrics.csv"])


# --------------------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="freqshape", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "check a scenario and list every diagnostic"),
                        ("simulate", "nonlinear time-domain run -> timeseries.csv"),
                        ("modes", "linearize and classify modes -> modes.csv, pf_matrix.csv"),
                        ("sweep", "grid of runs over analyses.sweep -> metrics.csv, modes.csv"),
                        ("metrics", "simulate and summarize -> timeseries.csv, metrics.csv"),
                        ("reduced", "reduced-order step responses -> timeseries.csv, metrics.csv")):
        sp = sub.add_parser(name, help=help_)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--scenario", type=Path, help="JSON scenario file")
        src.add_argument("--builtin", choices=sorted(cfg.BUILTINS), help="built-in scenario")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a document entry (dotted path, JSON value); repeatable")
        sp.add_argument("--dt", type=float, help="integration step (s)")
        sp.add_argument("--t-end", type=float, help="simulation horizon (s)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args):
    out = [cfg.parse_assignment(s) for s in args.set]
    if args.dt is not None:
        out.append(("integrator.dt_s", args.dt))
    if args.t_end is not None:
        out.append(("integrator.t_end_s", args.t_end))
    return out


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = cfg.builtin_document(args.builtin) if args.builtin else cfg.load_document(args.scenario)
        overrides = _overrides(args)
        if not isinstance(raw, dict):
            raise cfg.ConfigError([cfg.Diagnostic("", "document must be a JSON object")])
        doc = cfg.resolve(raw, overrides)
    except cfg.ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=stderr)
        return EXIT_INVALID
    h = cfg.config_hash(doc)
    if args.command == "validate":
        print(f"{doc.get('name', 'scenario')}: valid (config {h})", file=stdout)
        return EXIT_OK
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            rep = run_simulate(doc, h, out)
        elif args.command == "metrics":
            rep = run_simulate(doc, h, out, with_metrics=True)
        elif args.command == "modes":
            rep = run_modes(doc, h, out)
        elif args.command == "sweep":
            rep = run_sweep(raw, overrides, doc, h, out, jobs=max(1, args.jobs))
        else:
            rep = run_reduced(doc, h, out)
    except cfg.ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=stderr)
        return EXIT_INVALID
    except RUNTIME_ERRORS as exc:
        print(f"runtime error in scenario {doc.get('name', 'scenario')!r}: "
              f"{type(exc).__name__}: {exc}", file=stderr)
        return EXIT_RUNTIME
    text = rep.to_text()
    (out / "report.txt").write_text(text)
    stdout.write(text)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
