"""Command-line interface: list, show, expand, and verify catalog entries.

Commands
--------
list                 print every catalog entry (id and anchor)
show <id>            print one entry in full
expand <target>      expand an expression, or one side of an entry, as a
                     truncated q-series; <target> is either DSL text or
                     ``<id>.lhs`` / ``<id>.rhs``
verify <id|all|file> run seeded randomized verification trials; ``all``
                     covers the whole catalog, a path ending in ``.idn``
                     loads an entry from that file

Exit status: 0 all requested checks pass, 1 an identity mismatch was found,
2 usage, configuration, or evaluation error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from gmpy2 import mpq

from . import catalog
from .dsl import parse, pretty
from .engine import SubstEnv, eval_expr, verify_trials
from .errors import QSlaterError
from .expr import Mon, Nahm, Phi, PochFin, PochInf, Pow, SeqRef, walk
from .hyper import nahm_grid

SUBST_GRAMMAR = """\
substitution syntax (--subst):
  substs  :=  subst ("," subst)*
  subst   :=  name "=" coeff "*q^" exp  |  name "=" coeff  |  name "=q^" exp
  coeff   :=  nonzero rational, "p" or "p/q" with optional leading "-"
  exp     :=  integer with optional leading "-"
examples:  x=1/2*q^2   b=-2*q^0,y=q^3   a=3

config file (--config): one "key = value" per line; '#' starts a comment.
Keys: order, trials, seed, format, jobs.  Command-line flags win.
"""


class UsageError(QSlaterError):
    """Bad command-line input: unknown key, malformed substitution, etc."""


# --- configuration -----------------------------------------------------------


@dataclass
class CliConfig:
    """Effective settings after merging defaults, config file, and flags."""

    cap: int = 30
    trials: int = 3
    seed: int = 42
    format: str = "text"
    jobs: int = None  # None means one worker per CPU

    def validated(self):
        if self.cap < 1:
            raise UsageError(f"order must be >= 1, got {self.cap}")
        if self.trials < 1:
            raise UsageError(f"trials must be >= 1, got {self.trials}")
        if self.format not in ("text", "json"):
            raise UsageError(f"format must be 'text' or 'json', got {self.format!r}")
        if self.jobs is not None and self.jobs < 1:
            raise UsageError(f"jobs must be >= 1, got {self.jobs}")
        return self


_CONFIG_KEYS = {"order": "cap", "trials": "trials", "seed": "seed",
                "format": "format", "jobs": "jobs"}


def load_config(path) -> dict:
    """Read ``key = value`` lines into CliConfig field overrides."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep or not key or not value:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        field = _CONFIG_KEYS[key]
        if field == "format":
            out[field] = value
        elif field == "jobs" and value == "auto":
            out[field] = None
        else:
            try:
                out[field] = int(value)
            except ValueError:
                raise UsageError(
                    f"{path}:{lineno}: {key} needs an integer, got {value!r}"
                ) from None
    return out


def merge_config(args) -> CliConfig:
    cfg = CliConfig()
    if getattr(args, "config", None):
        cfg = replace(cfg, **load_config(args.config))
    for attr, field in (("order", "cap"), ("trials", "trials"), ("seed", "seed"),
                        ("format", "format"), ("jobs", "jobs")):
        v = getattr(args, attr, None)
        if v is not None:
            cfg = replace(cfg, **{field: v})
    return cfg.validated()


# --- substitutions -------------------------------------------------------------


_SUBST = re.compile(
    r"^([A-Za-z][A-Za-z0-9]*)="
    r"(?:(-?\d+(?:/\d+)?)(?:\*q\^(-?\d+))?|q\^(-?\d+))$"
)


def parse_substs(text: str) -> dict:
    """Parse 'name=c*q^e,...' into {name: (mpq(c), int(e))}."""
    out = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        m = _SUBST.match(chunk)
        if not m:
            raise UsageError(
                f"bad substitution {chunk!r}; expected name=c*q^e "
                "with c a rational like 2 or -1/3")
        name, c_txt, e_txt, bare_e = m.groups()
        if bare_e is not None:
            c, e = mpq(1), int(bare_e)
        else:
            c = mpq(c_txt)
            e = int(e_txt) if e_txt is not None else 0
        if c == 0:
            raise UsageError(f"substitution for {name!r} has zero coefficient")
        out[name] = (c, e)
    return out


def _param_names(e) -> set:
    """Parameter names appearing anywhere in an expression tree."""
    names = set()
    for node in walk(e):
        mons = []
        if isinstance(node, Mon):
            mons.append(node.mon)
        elif isinstance(node, (Pow, PochFin, PochInf)):
            mons.append(node.base)
        elif isinstance(node, Phi):
            mons.extend((*node.upper, *node.lower, node.arg))
        for m in mons:
            names.update(p for p, _ in m.powers)
    return names


def _grid_of(e) -> int:
    """Exponent grid an expression needs: lcm of the grids of its sums."""
    from math import lcm

    d = 1
    for node in walk(e):
        if isinstance(node, Nahm):
            d = lcm(d, nahm_grid(node))
    return d


# --- output helpers -----------------------------------------------------------


def _spec_json(spec):
    if spec[0] == "fixed":
        return ["fixed", str(spec[1]), spec[2]]
    return list(spec)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _series_json(s):
    if s.exact_zero:
        return {"d": s.d, "exact_zero": True, "coeffs": []}
    coeffs = []
    for i, c in enumerate(s.coeffs):
        if c != 0:
            coeffs.append([s._exp_str(s.v0 + i), str(c)])
    return {"d": s.d, "exact_zero": False, "cap": s._exp_str(s.cap),
            "coeffs": coeffs}


# --- commands -------------------------------------------------------------------


def cmd_list(args, cfg: CliConfig) -> int:
    entries = catalog.list_identities()
    if cfg.format == "json":
        _emit([{"id": id, "anchor": anchor,
                "params": {k: _spec_json(v) for k, v in params.items()}}
               for id, anchor, params in entries])
    else:
        for id, anchor, _params in entries:
            print(f"{id}\t{anchor}")
    return 0


def cmd_show(args, cfg: CliConfig) -> int:
    rec = catalog.get(args.id)
    if cfg.format == "json":
        obj = {"id": rec.id, "anchor": rec.anchor, "cap": rec.cap,
               "grid": rec.grid, "lhs": pretty(rec.lhs), "rhs": pretty(rec.rhs),
               "params": {k: _spec_json(v) for k, v in rec.param_specs().items()},
               "intparams": {k: list(v) for k, v in rec.intparams.items()},
               "family": list(rec.family), "notes": rec.notes}
        _emit(obj)
        return 0
    print(f"id:     {rec.id}")
    print(f"anchor: {rec.anchor}")
    print(f"cap:    {rec.cap}   grid: 1/{rec.grid}")
    print(f"lhs:    {pretty(rec.lhs)}")
    print(f"rhs:    {pretty(rec.rhs)}")
    for name, spec in sorted(rec.param_specs().items()):
        if spec[0] == "fixed":
            print(f"param:  {name} = {spec[1]}*q^{spec[2]}")
        else:
            print(f"param:  {name} with exponent in {spec[1]}..{spec[2]}")
    for name, (lo, hi) in sorted(rec.intparams.items()):
        print(f"intparam: {name} in {lo}..{hi}")
    if rec.family:
        print(f"family: {', '.join(rec.family)}")
    if rec.notes:
        print(f"notes:  {rec.notes}")
    return 0


_TARGET = re.compile(r"^([A-Za-z][A-Za-z0-9_-]*)\.(lhs|rhs)$")


def cmd_expand(args, cfg: CliConfig) -> int:
    m = _TARGET.match(args.target)
    if m and m.group(1) in {id for id, _, _ in catalog.list_identities()}:
        rec = catalog.get(m.group(1))
        expr = rec.lhs if m.group(2) == "lhs" else rec.rhs
        grid = rec.grid
    else:
        expr = parse(args.target)
        grid = _grid_of(expr)
    if any(isinstance(n, SeqRef) for n in walk(expr)):
        raise UsageError(
            "target contains the general-sequence placeholder A(...); expand "
            "a concrete entry side or substitute a family member first")
    substs = parse_substs(args.subst) if args.subst else {}
    missing = sorted(_param_names(expr) - set(substs))
    if missing:
        raise UsageError(
            f"missing substitution for parameter {missing[0]!r}"
            + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else "")
            + "; pass --subst \"name=c*q^e,...\"")
    series = eval_expr(expr, substs, cfg.cap, grid)
    if cfg.format == "json":
        _emit({"target": args.target, "order": cfg.cap,
               "series": _series_json(series)})
    else:
        print(series)
    return 0


def _load_target(target: str):
    if target.endswith(".idn") or os.sep in target:
        p = Path(target)
        if not p.is_file():
            raise UsageError(f"no such entry file: {target}")
        return catalog.load_file(p)
    return catalog.get(target)


def _verify_one(target: str, cap: int, trials: int, seed: int) -> dict:
    report = verify_trials(_load_target(target), cap, trials, seed)
    return report.json_obj()


def _report_passed(obj: dict) -> bool:
    return bool(obj["trials"]) and all(
        t["status"] == "pass" for t in obj["trials"])


def _print_report_text(obj: dict):
    if _report_passed(obj):
        print(f"{obj['id']}: PASS ({len(obj['trials'])} trials, "
              f"order {obj['cap']}, {obj['elapsed_ms']} ms)")
        return
    for i, t in enumerate(obj["trials"]):
        if t["status"] == "pass":
            continue
        if t["status"] == "fail":
            mm = t["mismatch"]
            where = f" [{mm['member']}]" if "member" in mm else ""
            print(f"{obj['id']}: FAIL trial {i}{where} at q^{mm['exponent']}: "
                  f"lhs {mm['lhs']} != rhs {mm['rhs']}")
        else:
            print(f"{obj['id']}: ERROR trial {i}: {t.get('error')}")
        return


def cmd_verify(args, cfg: CliConfig) -> int:
    if args.target == "all":
        targets = [id for id, _, _ in catalog.list_identities()]
        jobs = cfg.jobs or os.cpu_count() or 1
        work = [(t, cfg.cap, cfg.trials, cfg.seed) for t in targets]
        if jobs > 1 and len(targets) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(targets))) as ex:
                reports = list(ex.map(_verify_star, work))
        else:
            reports = [_verify_star(w) for w in work]
        reports.sort(key=lambda r: r["id"])
    else:
        reports = [_verify_one(args.target, cfg.cap, cfg.trials, cfg.seed)]
    ok = all(_report_passed(r) for r in reports)
    if cfg.format == "json":
        # timing is omitted so reports with identical flags are byte-identical
        clean = [{k: v for k, v in r.items() if k != "elapsed_ms"}
                 for r in reports]
        _emit({"cap": cfg.cap, "seed": cfg.seed, "trials": cfg.trials,
               "passed": ok, "reports": clean})
    else:
        for r in reports:
            _print_report_text(r)
        print(f"{sum(_report_passed(r) for r in reports)}/{len(reports)} passed")
    return 0 if ok else 1


def _verify_star(w):
    return _verify_one(*w)


# --- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qslater",
        description="Exact verification of q-series identities by truncated "
                    "series expansion under randomized admissible substitutions.",
        epilog=SUBST_GRAMMAR,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", help="path to a 'key = value' config file")

    def common(p, *, order=False, trials=False):
        p.add_argument("--format", choices=("text", "json"),
                       help="output format (default text)")
        if order:
            p.add_argument("--order", type=int, metavar="N",
                           help="truncation order: expand through q^N")
        if trials:
            p.add_argument("--trials", type=int, metavar="T",
                           help="randomized trials per entry (default 3)")
            p.add_argument("--seed", type=int, metavar="S",
                           help="random seed (default 42)")
            p.add_argument("--jobs", type=_jobs_arg, metavar="J",
                           help="worker processes for 'verify all' "
                                "(integer or 'auto')")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list catalog entries")
    common(p)
    p.set_defaults(fn=cmd_list)

    p = sub.add_parser("show", help="print one catalog entry in full")
    p.add_argument("id")
    common(p)
    p.set_defaults(fn=cmd_show)

    p = sub.add_parser(
        "expand",
        help="expand DSL text or an entry side (<id>.lhs / <id>.rhs)")
    p.add_argument("target")
    p.add_argument("--subst", metavar="SUBSTS",
                   help="comma-separated name=c*q^e substitutions")
    common(p, order=True)
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser(
        "verify",
        help="verify an entry id, 'all', or a .idn file path")
    p.add_argument("target")
    common(p, order=True, trials=True)
    p.set_defaults(fn=cmd_verify)
    return parser


def _jobs_arg(text):
    if text == "auto":
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected an integer or 'auto', got {text!r}") from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_config(args)
        return args.fn(args, cfg)
    except QSlaterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
