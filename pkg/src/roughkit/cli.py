"""Command-line front end: ``roughkit <subcommand> [options]``.

Every subcommand also reads a flat ``key = value`` file given by ``--config``;
flags override file values and unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    StudyConfig,
    counterexample_study,
    covariance_lemma_suite,
    default_threads,
    good_sequence_study,
    wong_zakai_study,
    write_study_csv,
    write_summary_json,
)
from .gaussian import RngSpec, sample_bm, sample_fbm
from .io import read_csv, write_csv
from .metrics import HOLDER, MetricReport, holder_distance, p_variation_distance
from .path import LiftedPath, PiecewiseLinearPath, dyadic_times, signature_lift
from .rde import (
    heisenberg_fields,
    linear_scalar,
    linear_scalar_solution,
    solve_ode,
    solve_rde_level2,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ASSERT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class AssertionFailure(Exception):
    pass


def _levels(text: str) -> tuple[int, ...]:
    """'3:8' (inclusive range) or '3,5,7'."""
    text = str(text).strip()
    if ":" in text:
        a, b = text.split(":")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_STUDY = {
    "driver": (str, "bm"),
    "H": (float, 0.5),
    "level": (int, 2),
    "p": (float, 2.5),
    "p_prime": (float, None),
    "fine": (int, 12),
    "levels": (_levels, "3:8"),
    "replicas": (int, 64),
    "q": (float, 2.0),
    "seed": (int, 0),
    "dim": (int, 2),
    "statistic": (str, "good"),
    "pairs": (str, "auto"),
    "method": (str, "cholesky"),
    "outdir": (str, "."),
    "timing": (_bool, False),
}

OPTIONS: dict[str, dict] = {
    "sample": {
        "driver": (str, "bm"),
        "H": (float, 0.5),
        "dim": (int, 2),
        "fine": (int, 10),
        "method": (str, "cholesky"),
        "seed": (int, 0),
        "stream": (int, 0),
        "out": (str, "path.csv"),
    },
    "lift": {"in": (str, None), "level": (int, 2), "out": (str, "lifted.csv")},
    "metric": {
        "x": (str, None),
        "y": (str, None),
        "p": (float, 2.5),
        "kind": (str, "holder"),
        "pairs": (str, "all"),
        "level": (int, 2),
        "out": (str, None),
    },
    "good-seq": dict(_STUDY),
    "counterexample": {
        "p": (float, 2.5),
        "grid": (int, 64),
        "halvings": (int, 6),
        "vertices": (int, 8),
        "outdir": (str, None),
    },
    "wong-zakai": dict(
        _STUDY,
        dim=(int, 1),
        fine=(int, 10),
        levels=(_levels, "1,3,5,7"),
        replicas=(int, 32),
        a=(float, 0.1),
        b=(float, 0.5),
        y0=(float, 1.0),
        anticipative=(_bool, False),
        substeps=(int, 1),
    ),
    "lemmas": {
        "H": (float, 0.4),
        "p_prime": (float, 3.0),
        "sizes": (lambda s: tuple(int(v) for v in _floats(s)), "4,8,16,32,64,128,256"),
        "lattice": (int, 20),
        "outdir": (str, None),
    },
    "solve": {
        "in": (str, None),
        "fields": (str, "linear_scalar"),
        "a": (float, 0.1),
        "b": (float, 0.5),
        "y0": (_floats, "1.0"),
        "scheme": (str, "ode"),
        "substeps": (int, 4),
        "out": (str, "solution.csv"),
    },
}

HELP = {
    "sample": "sample a Brownian or fractional Brownian path on a dyadic grid",
    "lift": "lift a piecewise-linear path to level 2 or 3",
    "metric": "Hoelder or p-variation distance between two lifted paths",
    "good-seq": "coupled good-sequence rate study",
    "counterexample": "defects of approximations of the pure-area path",
    "wong-zakai": "Wong-Zakai rate study for dy = a y dt + b y dx",
    "lemmas": "exact covariance checks on uniform subdivisions",
    "solve": "solve an equation along a path or level-2 lifted path",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roughkit", description="Rough path toolkit.")
    parser.add_argument("--version", action="version", version=f"roughkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, opts in OPTIONS.items():
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", default=None, help="key = value file")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default $ROUGHKIT_THREADS or 1)")
        for key, (_, default) in opts.items():
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key, default=None, help=f"default: {default}")
    return parser


def read_config_file(filename) -> dict[str, str]:
    out = {}
    with open(filename, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{filename}:{n}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = OPTIONS[command]
    raw = {k: d for k, (_, d) in opts.items()}
    if ns.config:
        file_vals = read_config_file(ns.config)
        unknown = sorted(set(file_vals) - set(opts) - {"threads"})
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        if "threads" in file_vals and ns.threads is None:
            ns.threads = int(file_vals.pop("threads"))
        file_vals.pop("threads", None)
        raw.update(file_vals)
    for k in opts:
        v = getattr(ns, k, None)
        if v is not None:
            raw[k] = v
    cfg = {}
    for k, (conv, _) in opts.items():
        v = raw[k]
        try:
            cfg[k] = conv(v) if v is not None and isinstance(v, str) else v
        except ValueError as exc:
            raise UsageError(f"bad value for {k}: {v!r} ({exc})") from None
    cfg["threads"] = ns.threads if ns.threads is not None else default_threads()
    return cfg


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + k for k in missing)}")


def _outdir(cfg: dict) -> Path:
    d = Path(cfg["outdir"] or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _study_config(cfg: dict) -> StudyConfig:
    return StudyConfig(
        driver=cfg["driver"],
        H=cfg["H"],
        level=cfg["level"],
        p=cfg["p"],
        p_prime=cfg["p_prime"],
        fine=cfg["fine"],
        levels=cfg["levels"],
        M=cfg["replicas"],
        q=cfg["q"],
        seed=cfg["seed"],
        dim=cfg["dim"],
        statistic=cfg["statistic"],
        pairs=cfg["pairs"],
        fbm_method=cfg["method"],
        threads=cfg["threads"],
        timing=cfg["timing"],
    )


def _emit_study(result, cfg: dict, out) -> int:
    d = _outdir(cfg)
    write_study_csv(result, d / "study.csv")
    write_summary_json(result, d / "study_summary.json")
    lo, hi = result.slope_ci
    print(f"slope={result.slope:.6g} ci=[{lo:.6g},{hi:.6g}] replicas={result.replicas}", file=out)
    for name, fit in sorted(result.fits.items()):
        print(f"{name}_slope={fit['slope']:.6g}", file=out)
    if result.slope <= 0:
        raise AssertionFailure(f"fitted slope {result.slope:.6g} is not positive")
    print("STATUS OK", file=out)
    return EXIT_OK


def cmd_sample(cfg, out) -> int:
    grid = dyadic_times(cfg["fine"])
    rng = RngSpec(cfg["seed"], cfg["stream"])
    if cfg["driver"] == "bm":
        x = sample_bm(grid, cfg["dim"], rng)
    elif cfg["driver"] == "fbm":
        x = sample_fbm(grid, cfg["dim"], cfg["H"], rng, method=cfg["method"])
    else:
        raise UsageError(f"unknown driver {cfg['driver']!r}")
    write_csv(x, cfg["out"], [rng.header()])
    print(f"wrote {cfg['out']}", file=out)
    return EXIT_OK


def cmd_lift(cfg, out) -> int:
    _need(cfg, "in")
    x, comments = read_csv(cfg["in"])
    if not isinstance(x, PiecewiseLinearPath):
        raise UsageError("lift expects a piecewise-linear path")
    write_csv(signature_lift(x, cfg["level"]), cfg["out"], [c for c in comments if c.startswith("seed=")])
    print(f"wrote {cfg['out']}", file=out)
    return EXIT_OK


def _as_lift(obj, level: int) -> LiftedPath:
    return signature_lift(obj, level) if isinstance(obj, PiecewiseLinearPath) else obj


def cmd_metric(cfg, out) -> int:
    _need(cfg, "x", "y")
    x = _as_lift(read_csv(cfg["x"])[0], cfg["level"])
    y = _as_lift(read_csv(cfg["y"])[0], cfg["level"])
    if cfg["kind"] == "holder":
        rep = holder_distance(x, y, cfg["p"], pairs=cfg["pairs"], control=HOLDER)
    elif cfg["kind"] == "pvar":
        dist = p_variation_distance(x, y, cfg["p"])
        rep = MetricReport(dist, (float(x.times[0]), float(x.times[-1])), float("nan"))
    else:
        raise UsageError("kind must be 'holder' or 'pvar'")
    text = MetricReport.CSV_HEADER + "\n" + rep.to_csv_row() + "\n"
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# roughkit {__version__}\n" + text)
    out.write(text)
    return EXIT_OK


def cmd_good_seq(cfg, out) -> int:
    return _emit_study(good_sequence_study(_study_config(cfg)), cfg, out)


def cmd_counterexample(cfg, out) -> int:
    res = counterexample_study(cfg["p"], cfg["grid"], cfg["halvings"], cfg["vertices"])
    lines = ["mesh,defect_zero,defect_loops"]
    lines += [f"{m:.17g},{a:.17g},{b:.17g}" for m, a, b in zip(res.mesh, res.defect_zero, res.defect_loops)]
    text = "\n".join(lines) + "\n"
    if cfg["outdir"]:
        with open(_outdir(cfg) / "counterexample.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# roughkit {__version__}\n" + text)
    out.write(text)
    low = float(min(res.defect_zero.min(), res.defect_loops.min()))
    if low < res.floor:
        raise AssertionFailure(f"defect {low:.17g} fell below the floor {res.floor:.17g}")
    print(f"NOT_GOOD_SEQUENCE floor={res.floor:.17g} min_defect={low:.17g}", file=out)
    return EXIT_OK


def cmd_wong_zakai(cfg, out) -> int:
    sc = _study_config(cfg)
    vf = linear_scalar(cfg["a"], cfg["b"])
    res = wong_zakai_study(
        sc,
        vf,
        [cfg["y0"]],
        anticipative=cfg["anticipative"],
        closed_form=linear_scalar_solution(cfg["a"], cfg["b"]),
        substeps=cfg["substeps"],
    )
    u, c = res.extras["uniform"], res.extras["closed_form"]
    rel = float(np.max(np.abs(u - c) / np.maximum(c, np.finfo(float).tiny)))
    mono = float(np.mean(np.all(np.diff(u, axis=1) < 0, axis=1)))
    print(f"closed_form_rel_dev={rel:.6g} monotone_fraction={mono:.6g}", file=out)
    return _emit_study(res, cfg, out)


def cmd_lemmas(cfg, out) -> int:
    rep = covariance_lemma_suite(cfg["H"], cfg["p_prime"], cfg["sizes"], cfg["lattice"])
    text = json.dumps(rep, indent=2, sort_keys=True) + "\n"
    if cfg["outdir"]:
        (_outdir(cfg) / "lemmas.json").write_text(text, encoding="utf-8")
    out.write(text)
    problems = []
    if rep["lattice_total"]:
        bad = {k: v for k, v in rep["lattice_violations"].items() if v}
        problems.append(f"lattice violations {bad}")
    if not rep["non_increasing"]:
        problems.append(f"ratio increases at sizes {rep['increase_steps']}")
    if problems:
        raise AssertionFailure("; ".join(problems))
    print("STATUS OK", file=out)
    return EXIT_OK


def cmd_solve(cfg, out) -> int:
    _need(cfg, "in")
    x, comments = read_csv(cfg["in"])
    if cfg["fields"] == "linear_scalar":
        vf = linear_scalar(cfg["a"], cfg["b"])
    elif cfg["fields"] == "heisenberg":
        vf = heisenberg_fields()
    else:
        raise UsageError("fields must be 'linear_scalar' or 'heisenberg'")
    y0 = np.array(cfg["y0"])
    if cfg["scheme"] == "ode":
        if not isinstance(x, PiecewiseLinearPath):
            x = x.first_level()
        sol = solve_ode(vf, y0, x, cfg["substeps"])
    elif cfg["scheme"] == "level2":
        sol = solve_rde_level2(vf, y0, _as_lift(x, 2).truncate(2), with_lift=False)
    else:
        raise UsageError("scheme must be 'ode' or 'level2'")
    seeds = [c for c in comments if c.startswith("seed=")]
    write_csv(sol.y, cfg["out"], seeds)
    manifest = {
        "input": str(cfg["in"]),
        "output": str(cfg["out"]),
        "scheme": sol.scheme,
        "fields": vf.name,
        "mesh": float(np.max(np.diff(sol.y.times))),
        "substeps": cfg["substeps"] if cfg["scheme"] == "ode" else None,
        "seed": seeds[0] if seeds else None,
    }
    mpath = Path(cfg["out"]).parent / "manifest.jsonl"
    with open(mpath, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True) + "\n")
    print(f"wrote {cfg['out']}", file=out)
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "lift": cmd_lift,
    "metric": cmd_metric,
    "good-seq": cmd_good_seq,
    "counterexample": cmd_counterexample,
    "wong-zakai": cmd_wong_zakai,
    "lemmas": cmd_lemmas,
    "solve": cmd_solve,
}


def run(argv=None, out=None, err=None) -> int:
    """Run one subcommand; returns the exit code."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err

    def fail(code: int, msg: str) -> int:
        print(f"ERROR {code}: {' '.join(str(msg).split())}", file=err)
        return code

    try:
        ns = build_parser().parse_args(argv)
        cfg = resolve(ns.command, ns)
        return COMMANDS[ns.command](cfg, out)
    except UsageError as exc:
        return fail(EXIT_USAGE, exc)
    except AssertionFailure as exc:
        return fail(EXIT_ASSERT, exc)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return fail(EXIT_NUMERIC, exc)
    except (ValueError, TypeError, OSError, NotImplementedError) as exc:
        return fail(EXIT_USAGE, exc)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
