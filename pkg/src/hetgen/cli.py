"""Command-line front end: ``hetgen bound|simulate|cmi|alpha``.

Each run is driven by one JSON document and writes a CSV (UTF-8, LF line
endings, numbers at 12 significant digits).  Exit codes: 0 on success, 2 for a
configuration error, 3 when no feasible mixing matrix exists.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .bounds import (bound_equally_spaced, bound_thm7, bound_thm8_hd, bound_thm9,
                     GeometryInput)
from .cmi_toy import ToyProblem, verify_thm1, verify_thm2_tail, verify_thm5
from .datagen import (Teacher, two_cluster_centers, two_cluster_teacher, build_setup,
                      equally_spaced_centers, solve_alpha)
from .errors import ConfigError, DomainError, EnumerationLimitError, InfeasibleError
from .fedsim import ExperimentCfg, run_experiment
from .seeding import derive_rng
from .svm import TrainerCfg

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3

BOUND_HEADER = ["sweep_var", "value", "r", "bound", "bound_kind", "n", "K", "M", "theta"]
SIM_HEADER = ["trial", "setting", "rho", "gen_error", "emp_risk", "pop_risk", "pop_risk_se"]
SIM_SUMMARY_HEADER = ["setting", "rho", "trials", "gen_error_mean", "gen_error_se",
                      "emp_risk_mean", "emp_risk_se", "pop_risk_mean", "pop_risk_se"]
CMI_HEADER = ["theorem", "lhs", "rhs", "margin", "holds"]

_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_INT_OR_LIST = {"oneOf": [_POS_INT, {"type": "array", "items": _POS_INT}]}
_CENTERS = {"type": "array", "minItems": 1,
            "items": {"type": "array", "minItems": 1, "items": _NUM}}
_GRID = {"oneOf": [
    {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    {"type": "object", "additionalProperties": False, "required": ["start", "stop", "num"],
     "properties": {"start": {"type": "number", "exclusiveMinimum": 0},
                    "stop": {"type": "number", "exclusiveMinimum": 0},
                    "num": {"type": "integer", "minimum": 0}}},
]}


def _obj(properties: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": properties,
            "required": list(required)}


BOUND_SCHEMA = _obj({
    "seed": _INT,
    "form": {"enum": ["general", "equally_spaced", "hd"]},
    "kind": {"enum": ["ball", "gaussian"]},
    "M": _POS_INT, "K": _POS_INT, "r": _INT_OR_LIST,
    "n": {"type": "integer", "minimum": 2},
    "theta": _NUM,
    "centers": _CENTERS,
    "delta": {"type": "number", "minimum": 0},
    "spread_grid": _GRID,
    "tail_mode": {"type": "boolean"},
    "ceil_dims": {"type": "boolean"},
    "emp_risk": _NUM,
    "hd_base": {"enum": ["natural"]},
    "ratio_to_r": _POS_INT,
}, required=["M", "K", "r", "n", "theta", "spread_grid"])

_TRAINER = _obj({
    "learning_rate": {"type": "number", "exclusiveMinimum": 0},
    "epochs": {"type": "integer", "minimum": 0},
    "batch_size": _POS_INT,
    "l2_penalty": {"type": "number", "minimum": 0},
    "projection_radius": {"type": ["number", "null"]},
})

SIM_SCHEMA = _obj({
    "seed": _INT,
    "d": _POS_INT,
    "M": _POS_INT, "K": _POS_INT,
    "settings": {"type": "object", "minProperties": 1, "additionalProperties": _POS_INT},
    "preset": {"enum": ["two_cluster"]},
    "centers": _CENTERS,
    "kind": {"enum": ["ball", "gaussian"]},
    "spreads": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    "teacher": _obj({"normal": {"type": "array", "items": _NUM},
                     "offset_scale": _NUM}),
    "n": _POS_INT,
    "theta": _NUM,
    "trainer": _TRAINER,
    "n_test": _POS_INT,
    "trials": _POS_INT,
    "convention": {"enum": ["mixed", "margin"]},
    "view": {"enum": ["client", "pooled"]},
    "n_jobs": {"type": "integer"},
}, required=["settings", "spreads", "n"])

CMI_SCHEMA = _obj({
    "seed": _INT,
    "sample_space": {"type": "array", "minItems": 1,
                     "items": {"type": "array", "minItems": 2, "maxItems": 2,
                               "prefixItems": [{"type": "array", "items": _NUM},
                                               {"type": "number", "minimum": 0}]}},
    "client_probs": {"type": "array", "items": {"type": "array", "items": _NUM}},
    "learner": {"type": "string"},
    "n": _POS_INT, "K": _POS_INT,
    "theorems": {"type": "array", "items": {"enum": ["thm1", "thm2", "thm5"]}},
    "n_supersamples": _POS_INT,
    "trials": _POS_INT,
    "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "n_ghost": _POS_INT,
}, required=["sample_space", "learner", "n"])


def _path_str(parts) -> str:
    return "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in parts).lstrip(".") or "<root>"


def validate_config(doc, schema: dict) -> dict:
    """Validate against ``schema``; raise :class:`ConfigError` naming the first bad key path."""
    errors = sorted(Draft202012Validator(schema).iter_errors(doc),
                    key=lambda e: (list(map(str, e.absolute_path)), e.validator))
    if not errors:
        return doc
    err = errors[0]
    path = list(err.absolute_path)
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        known = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in known)
        if extra:
            raise ConfigError(_path_str(path + [extra[0]]), "unknown key")
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else "?"
        raise ConfigError(_path_str(path + [missing]), "missing required key")
    raise ConfigError(_path_str(path), err.message)


def load_config(path, schema: dict) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return validate_config(doc, schema)


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v == 0.0:
            return "0"
        return f"{v:.12g}"
    return str(value)


def _write_rows(out, blocks) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for i, (header, rows) in enumerate(blocks):
        if i:
            buf.write("\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    Path(out).write_bytes(buf.getvalue().encode("utf-8"))


def _grid(spec) -> list[float]:
    if isinstance(spec, list):
        return sorted(float(v) for v in spec)
    return [float(v) for v in np.linspace(spec["start"], spec["stop"], spec["num"])]


def _centers(cfg, M, d=None):
    if "centers" in cfg:
        centers = np.asarray(cfg["centers"], dtype=float)
        if centers.shape[0] != M:
            raise ConfigError("centers", f"expected {M} centers, got {centers.shape[0]}")
        return centers
    if "delta" in cfg:
        return equally_spaced_centers(M, cfg["delta"], d or 1)
    raise ConfigError("centers", "give either centers or delta")


def cmd_bound(cfg: dict, out) -> None:
    form = cfg.get("form", "general")
    kind = cfg.get("kind", "ball")
    M, K, n, theta = cfg["M"], cfg["K"], cfg["n"], float(cfg["theta"])
    rs = sorted(set([cfg["r"]] if isinstance(cfg["r"], int) else cfg["r"]))
    grid = _grid(cfg["spread_grid"])
    sweep_var = "rho" if kind == "ball" else "sigma"
    if not 0.0 < theta <= 1.0:
        raise ConfigError("theta", "must lie in (0, 1]")
    for r in rs:
        if r > M:
            raise ConfigError("r", f"r={r} exceeds M={M}")
    ratio_r = cfg.get("ratio_to_r")
    if ratio_r is not None and ratio_r not in rs:
        raise ConfigError("ratio_to_r", "must be one of the swept r values")

    def evaluate(r, s):
        if form == "equally_spaced":
            if "delta" not in cfg:
                raise ConfigError("delta", "required for the equally_spaced form")
            return bound_equally_spaced(M, K, r, cfg["delta"], s, n, theta, kind), "equally_spaced"
        geom = GeometryInput(n, K, M, r, theta, centers, s, kind, alphas[r],
                             cfg.get("ceil_dims", True))
        if form == "hd":
            if "emp_risk" not in cfg:
                raise ConfigError("emp_risk", "required for the hd form")
            return bound_thm8_hd(geom, cfg["emp_risk"]).value, "thm8_hd"
        if kind == "ball":
            return bound_thm7(geom, cfg.get("tail_mode", False)).value, "thm7"
        return bound_thm9(geom, cfg.get("tail_mode", False)).value, "thm9"

    if form != "equally_spaced":
        centers = _centers(cfg, M)
        alphas = {r: solve_alpha(M, K, r) for r in rs}
    values = {(r, s): evaluate(r, s) for r in rs for s in grid}
    header = BOUND_HEADER + (["ratio"] if ratio_r is not None else [])
    rows = []
    for r in rs:
        for s in grid:
            b, label = values[(r, s)]
            row = [sweep_var, s, r, b, label, n, K, M, theta]
            if ratio_r is not None:
                row.append(b / values[(ratio_r, s)][0])
            rows.append(row)
    _write_rows(out, [(header, rows)])


def cmd_simulate(cfg: dict, out) -> None:
    d = cfg.get("d", 100)
    preset = cfg.get("preset")
    if preset == "two_cluster" or ("centers" not in cfg and preset is None):
        centers, M = two_cluster_centers(d), 2
        if cfg.get("M", 2) != 2:
            raise ConfigError("M", "the two_cluster preset has M = 2")
    else:
        M = cfg.get("M", len(cfg["centers"]))
        centers = _centers(cfg, M, d)
        if centers.shape[1] != d:
            raise ConfigError("centers", f"centers must have dimension d={d}")
    K = cfg.get("K", M)
    if "teacher" in cfg:
        t = cfg["teacher"]
        normal = np.asarray(t.get("normal", two_cluster_teacher(d).normal), dtype=float)
        if normal.shape[0] != d:
            raise ConfigError("teacher.normal", f"must have length d={d}")
        teacher = Teacher(normal, t.get("offset_scale", 0.2))
    else:
        teacher = two_cluster_teacher(d)
    trainer = TrainerCfg(**cfg.get("trainer", {}))
    theta = float(cfg.get("theta", 1.0))
    if not 0.0 < theta <= 1.0:
        raise ConfigError("theta", "must lie in (0, 1]")
    settings = sorted(cfg["settings"].items(), key=lambda kv: (kv[1], kv[0]))
    for name, r in settings:
        if r > M:
            raise ConfigError(f"settings.{name}", f"r={r} exceeds M={M}")
    rows, summary = [], []
    for rho in sorted(float(s) for s in cfg["spreads"]):
        for name, r in settings:
            setup = build_setup(M, K, r, centers, cfg.get("kind", "ball"), rho, teacher)
            exp = ExperimentCfg(setup, cfg["n"], theta, trainer, cfg.get("n_test", 100_000),
                                cfg.get("trials", 1), cfg.get("seed", 0),
                                cfg.get("convention", "mixed"), cfg.get("view", "client"),
                                tag=f"simulate/n={cfg['n']}")
            rep = run_experiment(exp, n_jobs=cfg.get("n_jobs", 1))
            for t in range(rep.trials):
                rows.append([t, name, rho, rep.gen_error[t], rep.emp_risk[t], rep.pop_risk[t],
                             rep.pop_risk_se[t]])
            s = rep.summary()
            summary.append([name, rho, rep.trials, s["gen_error_mean"], s["gen_error_se"],
                            s["emp_risk_mean"], s["emp_risk_se"], s["pop_risk_mean"],
                            s["pop_risk_se"]])
    _write_rows(out, [(SIM_HEADER, rows), (SIM_SUMMARY_HEADER, summary)])


def cmd_cmi(cfg: dict, out) -> None:
    K = cfg.get("K", 1)
    pairs = [(tuple(v), p) for v, p in cfg["sample_space"]]
    problem = ToyProblem.from_sample_space(pairs, cfg["learner"], cfg["n"], K,
                                           cfg.get("client_probs"))
    seed = cfg.get("seed", 0)
    rows = []
    for i, name in enumerate(cfg.get("theorems", ["thm1"])):
        rng = derive_rng(seed, "cmi/" + name, i)
        if name == "thm1":
            res = verify_thm1(problem, cfg.get("n_supersamples", 2000), rng)
        elif name == "thm2":
            res = verify_thm2_tail(problem, cfg.get("delta", 0.1), cfg.get("trials", 1000), rng,
                                   cfg.get("n_ghost", 16))
        else:
            if problem.n < 10:
                raise ConfigError("n", "thm5 needs n >= 10")
            res = verify_thm5(problem, cfg.get("n_supersamples", 200), rng)
        rows.append([res.theorem, res.lhs, res.rhs, res.margin, res.holds])
    _write_rows(out, [(CMI_HEADER, rows)])


def cmd_alpha(M: int, K: int, r: int, stream) -> None:
    alpha = solve_alpha(M, K, r)
    stream.write(f"alpha (M={M}, K={K}, r={r})\n")
    for k in range(K):
        cells = " ".join(fmt(v) for v in alpha.entries[k])
        stream.write(f"client {k + 1} window {alpha.windows[k]}: {cells}\n")
    stream.write(f"max row residual: {fmt(alpha.row_residual())}\n")
    stream.write(f"max column residual: {fmt(alpha.column_residual())}\n")
    stream.write(f"max band violation: {fmt(alpha.band_violation())}\n")


COMMANDS = {"bound": (BOUND_SCHEMA, cmd_bound), "simulate": (SIM_SCHEMA, cmd_simulate),
            "cmi": (CMI_SCHEMA, cmd_cmi)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
    p = sub.add_parser("alpha", help="solve and print the mixing matrix")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "alpha":
            cmd_alpha(args.M, args.K, args.r, sys.stdout)
        else:
            schema, handler = COMMANDS[args.command]
            handler(load_config(args.config, schema), args.out)
    except InfeasibleError as exc:
        print(f"hetgen: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"hetgen: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, EnumerationLimitError) as exc:
        print(f"hetgen: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
