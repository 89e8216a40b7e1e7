"""Command line front end: ``helmprop <subcommand> ...``.

Subcommands
-----------
propagate  apply ``U`` for an affine map to an HLF1 field
kappa      map phase-space points given as CSV
egorov     conjugation residual sweep, JSON report
unitarity  unitarity defect sweep, JSON report
sgram      spectrogram of a 1D field as CSV (and PGM)
compare    ridge transport check between two fields, JSON report

Options may also come from a JSON file given with ``--config``; command
line values win. Outputs are written atomically and each run prints a
one-line summary. Failures print ``error: <reason>: <message>`` on
standard error and exit with 1 (usage), 2 (microlocal support),
3 (degenerate configuration) or 4 (I/O or format).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .egorov import DEFAULT_HBARS, egorov_sweep, fit_slope, unitarity_defect
from .errors import EXIT_IO, EXIT_OK, EXIT_USAGE, FormatError, HelmpropError, UsageError
from .fields import PhasePoint, _atomic_write, load_field, save_field
from .geometry import AffineMap, SheetLabel, jacobian_J, parse_affine, sheet_labels
from .phasespace import gabor_spectrogram, transport_compare, write_csv, write_pgm
from .propagate import Cutoff, apply_U_affine
from .symbols import parse_symbol
from .symplectic import kappa_affine

__all__ = ["main", "build_parser", "RunConfig"]

log = logging.getLogger(__name__)

FLOOR_TOL = 1e-9


@dataclass
class RunConfig:
    """Resolved options of one invocation; ``to_dict`` is what reports echo."""

    command: str
    options: dict = field(default_factory=dict)
    seed: int = 0
    threads: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"cannot read {what} from {text!r}") from None


def _hbars(text) -> list[float]:
    """``"1/40,1/80"`` or ``"0.025 0.0125"``."""
    out = []
    for tok in str(text).replace(",", " ").split():
        num, _, den = tok.partition("/")
        try:
            out.append(float(num) / float(den) if den else float(num))
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"cannot read hbar value {tok!r}") from None
    if not out or any(not (h > 0) for h in out):
        raise UsageError("hbar values must be positive")
    return out


def _probes(text) -> list[PhasePoint]:
    """``"x,xi;x,xi;..."`` for 1D, or a CSV file with one ``x,xi`` row per probe."""
    pts = []
    items = str(text).split(";")
    if len(items) == 1 and Path(items[0].strip()).is_file():
        items = [",".join(r) for r in _read_points(items[0].strip()).astype(str)]
    for item in items:
        if not item.strip():
            continue
        v = _floats(item, "a probe")
        if len(v) != 2:
            raise UsageError(f"a probe needs two numbers 'x,xi', got {item.strip()!r}")
        pts.append(PhasePoint(v[0], v[1]))
    if not pts:
        raise UsageError("no probes given")
    return pts


def _cutoff(text) -> Cutoff:
    v = _floats(text, "the cutoff")
    if len(v) not in (1, 2):
        raise UsageError("cutoff is 'radius' or 'radius,margin'")
    return Cutoff(*v)


def _clean(obj):
    """JSON-ready copy: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path, payload: dict) -> None:
    text = json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    _atomic_write(Path(path), text.encode())


def _slope_or_floor(hbars, residuals):
    if all(r < FLOOR_TOL for r in residuals):
        return "floor"
    return fit_slope(hbars, [max(r, 1e-300) for r in residuals])


def _fmt_slope(v) -> str:
    return v if isinstance(v, str) else f"{v:.3f}"


# ---------------------------------------------------------------------------
# subcommands

def _cmd_propagate(a, cfg: RunConfig) -> str:
    f = load_field(a.input)
    m = parse_affine(a.affine, f.grid.d)
    u = apply_U_affine(f, m, _cutoff(a.cutoff), method=a.method, sheet=SheetLabel.parse(a.sheet))
    save_field(u, a.out)
    ratio = (u.norm() / f.norm()) ** 2 if f.norm() > 0 else float("nan")
    return f"propagate: wrote {a.out} (n={list(f.grid.n)}, method={a.method}, norm ratio {ratio:.6g})"


def _read_points(path):
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and not _is_numeric(rows[0]):
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] not in (2, 4):
        raise FormatError(f"{path}: expected rows of 'x,xi' (d=1) or 'x1,x2,xi1,xi2' (d=2)")
    return data


def _is_numeric(row) -> bool:
    try:
        [float(c) for c in row]
        return True
    except ValueError:
        return False


def _cmd_kappa(a, cfg: RunConfig) -> str:
    if a.input is not None:
        data = _read_points(a.input)
    else:
        if a.random is None:
            raise UsageError("kappa needs --in or --random")
        rng = np.random.default_rng(cfg.seed)
        d = a.dim
        x = rng.uniform(-1, 1, (a.random, d))
        xi = rng.normal(size=(a.random, d))
        xi *= (0.8 * rng.uniform(size=(a.random, 1)) ** (1 / d)) / np.linalg.norm(xi, axis=1, keepdims=True)
        data = np.concatenate([x, xi], axis=1)
    d = data.shape[1] // 2
    m = parse_affine(a.affine, d)
    x, xi = data[:, :d], data[:, d:]
    xn, kn = kappa_affine(m, (x, xi))
    J = jacobian_J(m.G, xi)
    sheet = sheet_labels(m.G, xi)
    names = [f"x{i + 1}" for i in range(d)] + [f"xi{i + 1}" for i in range(d)] if d > 1 else ["x", "xi"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names + ["J", "sheet"])
    for row in range(data.shape[0]):
        vals = [repr(float(v)) for v in np.concatenate([xn[row], kn[row]])]
        w.writerow(vals + [repr(float(J[row])), int(sheet[row])])
    _atomic_write(Path(a.out), buf.getvalue().encode())
    return f"kappa: mapped {data.shape[0]} points (d={d}) to {a.out}"


def _cmd_egorov(a, cfg: RunConfig) -> str:
    p = parse_symbol(a.symbol)
    m = parse_affine(a.affine, 1)
    hbars = _hbars(a.hbars)
    probes = _probes(a.probes)
    chi = _cutoff(a.cutoff)
    if a.side == "inverse":
        main_name, ablation = ("order1" if a.order == 1 else "order0"), "order0" if a.order == 1 else "order1"
    else:
        main_name, ablation = "with_J", "without_J"
    sweep = egorov_sweep(p, m, hbars, probes, a.side, (main_name, ablation), chi)
    res = sweep["residuals"]
    controls = {"ablation": ablation, "ablation_residuals": res[ablation],
                "ablation_slope": _slope_or_floor(hbars, res[ablation])}
    if a.controls:
        ident = egorov_sweep(p, AffineMap.identity(1), hbars, probes, a.side, (main_name,), chi)
        controls["identity_residuals"] = ident["residuals"][main_name]
        controls["identity_floor"] = all(r < FLOOR_TOL for r in ident["residuals"][main_name])
    slope = _slope_or_floor(hbars, res[main_name])
    report = {
        "config": cfg.to_dict(),
        "side": a.side,
        "prediction": main_name,
        "symbol": p.text,
        "map": m.describe(),
        "hbars": hbars,
        "grid_sizes": sweep["grid_sizes"],
        "probes": [[q.x[0], q.xi[0]] for q in probes],
        "residuals": res[main_name],
        "slope": slope,
        "controls": controls,
    }
    if a.side == "inverse":
        report["inverse_defects"] = sweep["inverse_defects"]
    _write_json(a.out, report)
    shown = slope if isinstance(slope, str) else f"{slope:.3f}"
    return f"egorov: {a.side} side, slope {shown}, residuals {['%.3g' % r for r in res[main_name]]} -> {a.out}"


def _cmd_unitarity(a, cfg: RunConfig) -> str:
    m = parse_affine(a.affine, 1)
    hbars = _hbars(a.hbars)
    tests = tuple(t.strip() for t in a.tests.split(",") if t.strip())
    rep = unitarity_defect(m, hbars, _probes(a.probes), _cutoff(a.cutoff), tests=tests)
    out = rep.to_dict()
    for key, vals in (("slope_J", rep.defect_J), ("slope_tilde_J", rep.defect_tilde_J)):
        if vals:
            out[key] = _slope_or_floor(hbars, vals)
    out["config"] = cfg.to_dict()
    _write_json(a.out, out)
    return (f"unitarity: |U psi|^2/|psi|^2 = {rep.norm_ratios[0]:.6g} (|J| = {rep.expected_ratio:.6g}), "
            f"slopes J {_fmt_slope(out['slope_J'])} tilde_J {_fmt_slope(out['slope_tilde_J'])} -> {a.out}")


def _cmd_sgram(a, cfg: RunConfig) -> str:
    f = load_field(a.input)
    xi_max = None if a.xi_max is None or a.xi_max <= 0 else a.xi_max
    s = gabor_spectrogram(f, a.window, xi_max)
    write_csv(s, a.out)
    if a.pgm:
        write_pgm(s, a.pgm)
    return (f"sgram: {s.x.size}x{s.xi.size} cells, window {s.window:.4g}, "
            f"mass/(2 pi hbar |f|^2) = {s.mass() / s.expected_mass(f):.6f} -> {a.out}")


def _cmd_compare(a, cfg: RunConfig) -> str:
    before = load_field(a.before)
    after = load_field(a.after)
    m = parse_affine(a.affine, 1)
    rep = transport_compare(before, m, after, _cutoff(a.cutoff))
    out = rep.to_dict()
    out["map"] = m.describe()
    out["config"] = cfg.to_dict()
    _write_json(a.out, out)
    verdict = "pass" if rep.passed else "fail"
    return (f"compare: Hausdorff distance {rep.distance:.4g} = {rep.distance / math.sqrt(rep.hbar):.2f} "
            f"sqrt(hbar), {verdict} -> {a.out}")


_COMMANDS = {
    "propagate": _cmd_propagate,
    "kappa": _cmd_kappa,
    "egorov": _cmd_egorov,
    "unitarity": _cmd_unitarity,
    "sgram": _cmd_sgram,
    "compare": _cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--threads", type=int, help="worker threads (default HELMPROP_THREADS)")
    common.add_argument("--seed", type=int, default=0, help="seed for generated test points")
    common.add_argument("--cutoff", default="0.95,0.05", help="frequency cutoff 'radius[,margin]'")
    common.add_argument("-v", "--verbose", action="count", default=0)

    top = _Parser(prog="helmprop", description="Semiclassical angular-spectrum propagation tools.")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("propagate", parents=[common], help="apply U for an affine map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--affine", required=True, help="e.g. 'rot:10;trans:0.3,0'")
    p.add_argument("--method", choices=("quadrature", "factorized"), default="quadrature")
    p.add_argument("--sheet", default="plus", help="sheet for the factorized method")
    p.add_argument("--out", required=True)

    p = sub.add_parser("kappa", parents=[common], help="map phase-space points")
    p.add_argument("--in", dest="input", help="CSV rows 'x,xi' or 'x1,x2,xi1,xi2'")
    p.add_argument("--random", type=int, help="generate this many points instead of reading --in")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1, help="dimension for --random")
    p.add_argument("--affine", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("egorov", parents=[common], help="conjugation residual sweep")
    p.add_argument("--symbol", required=True, help="expression in x and xi")
    p.add_argument("--affine", required=True)
    p.add_argument("--side", choices=("inverse", "adjoint"), default="adjoint")
    p.add_argument("--order", type=int, choices=(0, 1), default=1, help="prediction order, inverse side")
    p.add_argument("--hbars", default=",".join(f"1/{round(1 / h)}" for h in DEFAULT_HBARS))
    p.add_argument("--probes", default="0,0", help="'x,xi;x,xi;...'")
    p.add_argument("--no-controls", dest="controls", action="store_false", help="skip the identity-map control")
    p.add_argument("--out", required=True)

    p = sub.add_parser("unitarity", parents=[common], help="unitarity defect sweep")
    p.add_argument("--affine", required=True)
    p.add_argument("--hbars", default=",".join(f"1/{round(1 / h)}" for h in DEFAULT_HBARS))
    p.add_argument("--probes", default="0,0")
    p.add_argument("--tests", default="J,tilde_J", help="subset of 'J,tilde_J'")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sgram", parents=[common], help="spectrogram of a 1D field")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm")
    p.add_argument("--window", type=float, help="window width (default sqrt(hbar))")
    p.add_argument("--xi-max", type=float, default=1.25, help="frequency range; 0 for the full band")

    p = sub.add_parser("compare", parents=[common], help="ridge transport check")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--affine", required=True)
    p.add_argument("--out", required=True)
    return top


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv``; a ``--config`` file supplies defaults, command line values win."""
    command = next((tok for tok in argv if tok in _COMMANDS), None)
    path = _config_path(argv)
    if command is None or path is None or any(tok in ("-h", "--help") for tok in argv):
        a = parser.parse_args(argv)
        if a.command is None:
            raise UsageError("missing subcommand; choose one of " + ", ".join(_COMMANDS))
        return a
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    data = data.get(command, data)
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected an object of options for {command}")
    sub = parser._subparsers._group_actions[0].choices[command]
    known = {act.dest for act in sub._actions}
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"unknown option(s) in {path}: {', '.join(unknown)}")
    for act in sub._actions:
        if act.dest in data:
            act.required = False
    sub.set_defaults(**data)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand and return the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        a = _apply_config(build_parser(), argv)
        level = logging.WARNING - 10 * min(a.verbose, 2)
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        threads = a.threads
        if threads is None and os.environ.get("HELMPROP_THREADS"):
            threads = int(os.environ["HELMPROP_THREADS"])
        if threads is not None:
            if threads < 1:
                raise UsageError("--threads must be positive")
            _kernels.set_threads(threads)
        opts = {k: v for k, v in vars(a).items() if k not in ("command", "config", "verbose", "seed", "threads")}
        cfg = RunConfig(a.command, opts, a.seed, threads)
        print(_COMMANDS[a.command](a, cfg))
        return EXIT_OK
    except HelmpropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
