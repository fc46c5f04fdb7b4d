"""Command-line front end.

    shuntcavity <command> --config enclosure.json [options] [--out FILE] [--format csv|json]

Tables are written as CSV (default) or JSON, numbers to 9 significant
digits, preceded by a provenance line with the tool version, the command and
a SHA-256 of the run configuration. Model-validity warnings go to stderr and
never change the exit code.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import circuit as circ_mod
from . import crosstalk as xt
from . import oracle
from . import spectra
from .core import (GHZ, MM, EnclosureSpec, FitError, InvalidEnclosureError, ModelDomainError,
                   SolverError, require_valid)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_SOLVER = 4
EXIT_FIT = 5


class ConfigError(ValueError):
    """Bad command-line options or unreadable input files."""


def fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def _json_value(x: Any) -> Any:
    if x is None or isinstance(x, (str, bool)):
        return x
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else float(f"{x:.9g}")
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    return str(x)


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    notes: dict[str, Any] = field(default_factory=dict)


@dataclass
class Report:
    """Free-form JSON report (fit results)."""

    body: dict[str, Any]


@dataclass
class RunContext:
    command: str
    config_hash: str
    quiet: bool = False

    def warn(self, message: str) -> None:
        if not self.quiet:
            print(f"warning: {message}", file=sys.stderr)

    @property
    def provenance(self) -> dict[str, str]:
        return {"tool": "shuntcavity", "version": __version__, "command": self.command,
                "config_sha256": self.config_hash}

    def header_line(self) -> str:
        return (f"# shuntcavity {__version__} command={self.command} "
                f"config_sha256={self.config_hash}")


# --------------------------------------------------------------------------
# input


def _read_bytes(path: str | None) -> bytes:
    if path is None:
        return b""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"file not found: {path}")
    return p.read_bytes()


def load_spec(raw: bytes, path: str) -> EnclosureSpec:
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    spec = EnclosureSpec.from_dict(data)
    require_valid(spec)
    return spec


def _need_spec(args) -> EnclosureSpec:
    if args.spec is None:
        raise ConfigError(f"command '{args.command}' needs --config <enclosure.json>")
    return args.spec


def read_table(path: str) -> tuple[list[str], list[dict[str, str]]]:
    text = _read_bytes(path).decode("utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"{path}: no data rows")
    if lines[0].lstrip().startswith("{"):
        data = json.loads("\n".join(lines))
        cols = list(data["columns"])
        return cols, [dict(zip(cols, (str(v) for v in row))) for row in data["rows"]]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    return list(reader.fieldnames or []), list(reader)


def _column(rows: list[dict[str, str]], name: str) -> np.ndarray:
    try:
        return np.array([float(r[name]) for r in rows if r.get(name, "") != ""])
    except ValueError as exc:
        raise ConfigError(f"column {name!r}: {exc}") from exc


# --------------------------------------------------------------------------
# commands


def cmd_modes(args, ctx: RunContext) -> Table:
    spec = _need_spec(args)
    count = args.count
    shifted = spectra.shifted_spectrum(spec, count)
    bare = spectra.bare_spectrum(spec, count)
    for flag in shifted.flags:
        ctx.warn(flag)
    columns = ["rank", "n", "m", "f_bare_GHz", "f_GHz"]
    circuit_freqs = None
    if args.beta is not None:
        if args.f0_ghz is None:
            raise ConfigError("--beta needs --f0-ghz")
        if not spec.has_shunts:
            raise ConfigError("circuit column needs a shunt array in the enclosure")
        n, m = spec.shunt_counts[0] + 1, spec.shunt_counts[1] + 1
        model = circ_mod.CoupledCavityCircuit.from_frequency(
            args.f0_ghz * GHZ, args.beta, n, m, beta1=args.beta1, lb_ratio=args.lb_ratio)
        circuit_freqs = circ_mod.numeric_mode_frequencies(model).frequencies
        columns.append("f_circuit_GHz")
    table = Table(columns, notes={"f_p_GHz": spectra.spectrum_plasma_frequency(spec) / GHZ,
                                  "eps_eff": spec.eps_eff})
    for k, (label, fb, f) in enumerate(zip(bare.labels, bare.frequencies, shifted.frequencies)):
        row = [k + 1, label[0], label[1], fb / GHZ, f / GHZ]
        if circuit_freqs is not None:
            row.append(circuit_freqs[k] / GHZ if k < circuit_freqs.size else None)
        table.rows.append(row)
    return table


def cmd_plasma(args, ctx: RunContext) -> Table:
    spec = _need_spec(args)
    a, r, eps = spec.shunt_spacing, spec.shunt_radius, spec.eps_eff
    f_a = spectra.boundary_model_cutoff(a, eps)
    f_p = spectra.spectrum_plasma_frequency(spec)
    if spec.has_shunts and r / a >= spectra.PLASMA_VALIDITY_RA:
        ctx.warn(f"plasma model outside validity: r/a = {r / a:.3g}")
    k_p = spectra.PlasmaBand(f_p, eps).k_p if f_p > 0 else 0.0
    table = Table(["a_mm", "r_mm", "r_over_a", "eps_eff", "f_a_GHz", "f_p_GHz", "k_p_per_mm",
                   "f_fundamental_GHz"])
    table.rows.append([a / MM, r / MM, r / a, eps, f_a / GHZ, f_p / GHZ, k_p * MM,
                       spectra.shifted_spectrum(spec, 1).fundamental / GHZ])
    return table


def cmd_circuit(args, ctx: RunContext) -> Table:
    model = circ_mod.CoupledCavityCircuit.from_frequency(
        args.f0_ghz * GHZ, args.beta, args.n, args.m, beta1=args.beta1, lb_ratio=args.lb_ratio)
    numeric = circ_mod.numeric_mode_frequencies(model)
    columns = ["rank", "f_GHz"]
    closed = None
    if args.beta1 == 0 and args.lb_ratio in (0.0, 1.0, 2.0):
        closed = circ_mod.closed_form_frequencies(model)
        columns += ["i", "j", "f_closed_GHz"]
    elif args.beta1 == 0:
        ctx.warn("no closed form for this boundary inductance; numeric spectrum only")
    table = Table(columns, notes={"f_c_GHz": model.f0 / math.sqrt(1 + 8 * model.beta) / GHZ})
    for k, f in enumerate(numeric.frequencies):
        row = [k + 1, f / GHZ]
        if closed is not None:
            i, j = closed.labels[k]
            row += [i, j, closed.frequencies[k] / GHZ]
        table.rows.append(row)
    return table


def _delta_p(args, spec: EnclosureSpec | None, f_q: float) -> float:
    if args.delta_p_mm is not None:
        return args.delta_p_mm * MM
    if spec is None:
        raise ConfigError("give --config or --delta-p-mm")
    if not spec.has_shunts:
        raise ModelDomainError("no shunt array: the enclosure has no cut-off")
    f_p = spectra.spectrum_plasma_frequency(spec)
    return xt.penetration_depth(2 * math.pi * f_q, 2 * math.pi * f_p, spec.eps_eff)


def cmd_crosstalk(args, ctx: RunContext) -> Table:
    spec = args.spec
    f_q = args.fq_ghz * GHZ
    a = args.a_mm * MM if args.a_mm is not None else (spec.shunt_spacing if spec else None)
    if a is None:
        raise ConfigError("give --config or --a-mm for the qubit spacing")
    delta_p = _delta_p(args, spec, f_q)
    positions = range(1, args.count + 1)
    model = xt.gamma_profile(positions, a, delta_p)
    table = Table(["j", "d_mm", "gamma", "gamma_exp_approx"],
                  notes={"delta_p_mm": delta_p / MM, "f_q_GHz": args.fq_ghz,
                         "source": args.source})
    if args.source == "oracle":
        if spec is None:
            raise ConfigError("--source oracle needs --config")
        d, gamma = oracle.coupling_profile(spec, f_q, args.count,
                                           h=args.h_mm * MM if args.h_mm else None)
    else:
        d, gamma = model.distances, model.gamma
    for j, dj, g, ge in zip(positions, d, gamma, model.gamma_exp):
        table.rows.append([j, dj / MM, g, ge])
    return table


def cmd_oracle(args, ctx: RunContext) -> Table:
    spec = _need_spec(args)
    h = args.h_mm * MM if args.h_mm else oracle.default_h(spec, args.cells_per_gap)
    if args.levels:
        study = oracle.convergence_study(spec, [h / 2 ** q for q in range(args.levels)],
                                         args.count)
        for flag in study.flags:
            ctx.warn(flag)
        cols = ["mode"] + [f"f_h{q}_GHz" for q in range(args.levels)] + ["order",
                                                                          "extrapolated_GHz"]
        table = Table(cols, notes={"h_mm": [x / MM for x in study.h]})
        for q in range(study.frequencies.shape[1]):
            table.rows.append([q + 1, *(study.frequencies[:, q] / GHZ), study.order[q],
                               study.extrapolated[q] / GHZ])
        return table
    modes = oracle.lowest_modes(spec, h, args.count)
    cols = ["rank", "f_GHz"]
    ref = None
    if args.compare == "plasma":
        shifted = spectra.shifted_spectrum(spec, len(modes))
        for flag in shifted.flags:
            ctx.warn(flag)
        ref = shifted.frequencies
        cols += ["f_plasma_GHz", "rel_err"]
    table = Table(cols, notes={"h_mm": h / MM, "residual": modes[0].residual})
    for k, mode in enumerate(modes):
        row = [k + 1, mode.frequency / GHZ]
        if ref is not None:
            row += [ref[k] / GHZ, (ref[k] - mode.frequency) / mode.frequency]
        table.rows.append(row)
    if ref is not None:
        table.notes["nre"] = circ_mod.normalized_relative_error(
            [m.frequency for m in modes], ref)
    if args.fields:
        outdir = Path(args.fields)
        outdir.mkdir(parents=True, exist_ok=True)
        for k, mode in enumerate(modes):
            (outdir / f"mode_{k + 1:03d}.txt").write_text(oracle.export_field(mode))
    return table


def cmd_fit(args, ctx: RunContext) -> Report:
    columns, rows = read_table(args.input)
    kind = args.kind
    if kind == "auto":
        kind = "profile" if "gamma" in columns else "circuit"
    if kind == "profile":
        d = _column(rows, "d_mm") * MM
        gamma = _column(rows, "gamma")
        a = float(d[0])
        profile = xt.CrosstalkProfile(tuple(range(1, d.size + 1)), d, gamma, float("nan"),
                                      np.exp(-(d - a)), a)
        try:
            res = xt.fit_penetration_depth(profile)
        except ValueError as exc:
            raise FitError(str(exc)) from exc
        if not math.isfinite(res.delta_p):
            raise FitError("penetration-depth fit did not converge")
        body: dict[str, Any] = {"model": "k0-profile", "delta_p_mm": res.delta_p / MM,
                                "residual": res.residual, "monotone": res.monotone}
        if args.spec is not None and args.fq_ghz is not None:
            pred = _delta_p(args, args.spec, args.fq_ghz * GHZ)
            body["predicted_delta_p_mm"] = pred / MM
            body["relative_deviation"] = (res.delta_p - pred) / pred
        return Report(body)
    col = "f_GHz" if "f_GHz" in columns else None
    if col is None:
        raise ConfigError(f"{args.input}: expected an f_GHz or gamma column")
    freqs = _column(rows, col) * GHZ
    n, m = args.n, args.m
    if n is None or m is None:
        side = int(round(math.sqrt(freqs.size)))
        if side * side != freqs.size:
            raise ConfigError("give --n and --m: mode count is not a perfect square")
        n = m = side
    orders = (1, 2) if args.order == "both" else (int(args.order),)
    fits = []
    for order in orders:
        try:
            fit = circ_mod.fit_circuit_params(freqs, n, m, neighbour_order=order,
                                              lb_ratio=args.lb_ratio)
        except ValueError as exc:
            raise FitError(str(exc)) from exc
        if not fit.converged:
            ctx.warn(f"order-{order} fit: optimizer reported non-convergence")
        fits.append({"model": f"circuit-order-{order}", "n": n, "m": m,
                     "f0_GHz": fit.f0 / GHZ, "beta": fit.beta, "beta1": fit.beta1,
                     "lb_ratio": fit.lb_ratio, "nre": fit.nre, "converged": fit.converged})
    return Report({"fits": fits})


def cmd_sweep(args, ctx: RunContext) -> Table:
    spec = _need_spec(args)
    radii = args.radii if args.radii else [spec.shunt_radius / MM]
    fqs = args.fq if args.fq else [None]
    cols = ["r_mm", "r_over_a", "f_p_GHz", "f_fundamental_GHz"]
    if args.fq:
        cols += ["f_q_GHz", "delta_p_mm"]
    if args.oracle:
        cols.append("f_oracle_GHz")
    table = Table(cols)
    counts = spec.shunt_counts
    for r_mm in radii:
        s = EnclosureSpec(spec.lx, spec.ly, spec.lz, spec.layers, spec.shunt_spacing,
                          r_mm * MM, counts)
        require_valid(s)
        f_p = spectra.spectrum_plasma_frequency(s)
        if s.has_shunts and s.shunt_radius / s.shunt_spacing >= spectra.PLASMA_VALIDITY_RA:
            ctx.warn(f"plasma model outside validity at r = {r_mm:g} mm")
        f_fund = spectra.shifted_spectrum(s, 1).fundamental
        f_orc = None
        if args.oracle:
            f_orc = oracle.lowest_modes(s, oracle.default_h(s, args.cells_per_gap), 1)[0].frequency
        for fq in fqs:
            row = [r_mm, r_mm * MM / s.shunt_spacing, f_p / GHZ, f_fund / GHZ]
            if fq is not None:
                if 0 < fq * GHZ < f_p:
                    dp = xt.penetration_depth(2 * math.pi * fq * GHZ, 2 * math.pi * f_p,
                                              s.eps_eff) / MM
                else:
                    ctx.warn(f"f_q = {fq:g} GHz is not below f_p at r = {r_mm:g} mm")
                    dp = float("nan")
                row += [fq, dp]
            if args.oracle:
                row.append(f_orc / GHZ)
            table.rows.append(row)
    return table


COMMANDS: dict[str, Callable] = {
    "modes": cmd_modes,
    "plasma": cmd_plasma,
    "circuit": cmd_circuit,
    "crosstalk": cmd_crosstalk,
    "oracle": cmd_oracle,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
}


# --------------------------------------------------------------------------
# output


def render(result: Table | Report, ctx: RunContext, fmt_name: str) -> str:
    if isinstance(result, Report):
        body = {"provenance": ctx.provenance, **result.body}
        if fmt_name == "json":
            return json.dumps(_json_value(body), indent=2) + "\n"
        fits = result.body.get("fits", [result.body])
        cols = list(fits[0].keys())
        buf = io.StringIO()
        buf.write(ctx.header_line() + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for f in fits:
            w.writerow([fmt(f.get(c)) for c in cols])
        return buf.getvalue()
    if fmt_name == "json":
        body = {"provenance": ctx.provenance, "notes": result.notes,
                "columns": result.columns, "rows": result.rows}
        return json.dumps(_json_value(body), indent=2) + "\n"
    buf = io.StringIO()
    buf.write(ctx.header_line() + "\n")
    for key, val in result.notes.items():
        shown = " ".join(fmt(v) for v in val) if isinstance(val, list) else fmt(val)
        buf.write(f"# {key}={shown}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a list of numbers: {text!r}") from exc


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="enclosure JSON (lengths in mm)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--quiet", action="store_true", help="suppress warnings")

    parser = argparse.ArgumentParser(prog="shuntcavity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"shuntcavity {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", parents=[common], help="analytic l=0 spectrum")
    p.add_argument("--count", type=_positive_int, default=10)
    p.add_argument("--beta", type=float, help="add an n x m circuit-model column")
    p.add_argument("--beta1", type=float, default=0.0)
    p.add_argument("--f0-ghz", type=float)
    p.add_argument("--lb-ratio", type=float, default=0.0)

    sub.add_parser("plasma", parents=[common], help="plasma and boundary-model cut-offs")

    p = sub.add_parser("circuit", parents=[common], help="coupled-cavity circuit spectrum")
    p.add_argument("--f0-ghz", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--beta1", type=float, default=0.0)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--lb-ratio", type=float, default=0.0)

    p = sub.add_parser("crosstalk", parents=[common], help="normalized coupling profile")
    p.add_argument("--fq-ghz", type=float, required=True)
    p.add_argument("--count", type=_positive_int, default=10)
    p.add_argument("--delta-p-mm", type=float)
    p.add_argument("--a-mm", type=float)
    p.add_argument("--source", choices=("model", "oracle"), default="model")
    p.add_argument("--h-mm", type=float)

    p = sub.add_parser("oracle", parents=[common], help="finite-difference eigenmodes")
    p.add_argument("--count", type=_positive_int, default=10)
    p.add_argument("--h-mm", type=float)
    p.add_argument("--cells-per-gap", type=_positive_int, default=oracle.CELLS_PER_GAP)
    p.add_argument("--levels", type=int, default=0, help="convergence study on N halvings")
    p.add_argument("--compare", choices=("plasma",))
    p.add_argument("--fields", help="directory for per-mode field dumps")

    p = sub.add_parser("fit", parents=[common], help="fit circuit or penetration-depth models")
    p.add_argument("--input", required=True, help="spectrum or profile CSV/JSON")
    p.add_argument("--kind", choices=("auto", "circuit", "profile"), default="auto")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--m", type=_positive_int)
    p.add_argument("--order", choices=("1", "2", "both"), default="both")
    p.add_argument("--lb-ratio", type=float, default=0.0)
    p.add_argument("--fq-ghz", type=float, help="with --config: compare to the predicted depth")
    p.add_argument("--delta-p-mm", type=float)

    p = sub.add_parser("sweep", parents=[common], help="radius / qubit-frequency sweep")
    p.add_argument("--radii", type=_float_list, help="radii in mm, e.g. '0 0.05 0.1'")
    p.add_argument("--fq", type=_float_list, help="qubit frequencies in GHz")
    p.add_argument("--oracle", action="store_true", help="add the oracle fundamental")
    p.add_argument("--cells-per-gap", type=_positive_int, default=oracle.CELLS_PER_GAP)
    return parser


def _config_hash(raw: bytes, args: argparse.Namespace) -> str:
    skip = {"config", "out", "format", "quiet", "spec"}
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    h = hashlib.sha256(raw)
    h.update(json.dumps(opts, sort_keys=True, default=str).encode())
    return h.hexdigest()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = _read_bytes(args.config)
        args.spec = load_spec(raw, args.config) if args.config else None
        if getattr(args, "levels", 0) and args.levels < 3:
            raise ConfigError("--levels needs at least 3 grid levels")
        ctx = RunContext(args.command, _config_hash(raw, args), args.quiet)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = COMMANDS[args.command](args, ctx)
        for w in caught:
            ctx.warn(str(w.message))
        text = render(result, ctx, args.format)
    except (ConfigError, InvalidEnclosureError, oracle.ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
