"""Command-line entry point.

Every subcommand reads JSON, validates it before doing any work, and
writes its result atomically (temp file plus rename).  Exit codes: 0 on
success, 2 on validation errors, 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import accuracy, experiments, impossibility, vc
from .boundary import annotate_curvature, classify_boundary_point, extract_boundary
from .core import SCHEMA, CostModel, Dataset, GridSampled, LabelGrid, Norm, classifier_from_dict, load_json, rasterize
from .response import effective_grid, effective_of_grid

log = logging.getLogger("strategex")

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


class UsageError(ValueError):
    """Bad input; reported with exit code 2."""

    def __init__(self, message: str, schema: dict | None = None):
        super().__init__(message)
        self.schema = schema


# ---------------------------------------------------------------------------
# config documents


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    schema_: Literal["strategex/v1"] = Field(SCHEMA, alias="schema")


class ExpressivityDoc(_Doc):
    alphas: list[float] = [2.0, 8.0, 24.0]
    ks: list[int] = [1, 2, 3, 4, 5, 6]
    instances: int = Field(10, ge=1)
    box: list[list[float]] = [[-100.0, 100.0], [-100.0, 100.0]]
    cell: float = Field(0.5, gt=0)
    seed: int = 0
    tolerance: float = Field(0.9, gt=0, le=1)
    k_max: int = Field(10, ge=1)
    verify_count: int = Field(200, ge=10)

    @field_validator("alphas")
    @classmethod
    def _positive_alphas(cls, v):
        if not v or min(v) <= 0:
            raise ValueError("alphas must be a nonempty list of positive numbers")
        return v

    @field_validator("ks")
    @classmethod
    def _positive_ks(cls, v):
        if not v or min(v) < 1:
            raise ValueError("ks must be a nonempty list of degrees >= 1")
        return v

    def to_config(self) -> experiments.ExpressivityConfig:
        return experiments.ExpressivityConfig(
            tuple(self.alphas),
            tuple(self.ks),
            self.instances,
            tuple(tuple(b) for b in self.box),
            self.cell,
            self.seed,
            self.tolerance,
            self.k_max,
            self.verify_count,
        )


class ApproximationDoc(_Doc):
    alphas: list[float] = [0.5, 1.0, 2.0]
    mus: list[float] = [0.0, 1.0, 2.5, 5.0]
    instances: int = Field(10, ge=1)
    n_per_class: int = Field(25, ge=1)
    seed: int = 0
    grid_step: float | None = Field(None, gt=0)

    @field_validator("alphas")
    @classmethod
    def _positive_alphas(cls, v):
        if not v or min(v) <= 0:
            raise ValueError("alphas must be a nonempty list of positive numbers")
        return v

    @field_validator("mus")
    @classmethod
    def _nonnegative_mus(cls, v):
        if not v or min(v) < 0:
            raise ValueError("mus must be a nonempty list of nonnegative numbers")
        return v

    def to_config(self) -> experiments.ApproximationConfig:
        if 2 * self.n_per_class > accuracy.MAX_STRATEGIC_POINTS:
            raise ValueError(f"2 * n_per_class exceeds the exact-search cap of {accuracy.MAX_STRATEGIC_POINTS}")
        return experiments.ApproximationConfig(
            tuple(self.alphas), tuple(self.mus), self.instances, self.n_per_class, self.seed, self.grid_step
        )


# ---------------------------------------------------------------------------
# input and output


def _read_json(path: str) -> dict:
    try:
        return load_json(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _parse_box(text: str) -> tuple[tuple[float, float], ...]:
    """``"x0,x1,y0,y1"`` or a JSON list of ``[lo, hi]`` pairs."""
    try:
        value = json.loads(text) if text.strip().startswith("[") else [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse box {text!r}") from None
    flat = np.asarray(value, dtype=float).ravel()
    if flat.size % 2 or flat.size == 0:
        raise UsageError("box needs lo,hi pairs")
    box = tuple((float(lo), float(hi)) for lo, hi in flat.reshape(-1, 2))
    if any(hi <= lo for lo, hi in box):
        raise UsageError("box upper bounds must exceed lower bounds")
    return box


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}") from None


def _cost(args) -> CostModel:
    try:
        return CostModel(Norm.parse(args.norm), float(args.alpha))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_out(path: str | None) -> None:
    if path is None:
        return
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")


def _format(args, allowed: tuple[str, ...]) -> str:
    fmt = args.format
    if fmt is None:
        suffix = Path(args.out).suffix.lstrip(".").lower() if args.out else ""
        fmt = suffix if suffix in allowed else allowed[0]
    if fmt not in allowed:
        raise UsageError(f"{args.command} writes {'/'.join(allowed)}, not {fmt}")
    return fmt


def write_atomic(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.resolve().parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(doc: dict) -> str:
    return json.dumps({"schema": SCHEMA, **doc}, indent=2, sort_keys=False) + "\n"


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _classifier(path: str):
    try:
        return classifier_from_dict(_read_json(path))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid classifier in {path}: {exc}") from None


def _grid_input(args) -> LabelGrid:
    if args.grid:
        try:
            with open(args.grid) as fh:
                return LabelGrid.from_csv(fh)
        except FileNotFoundError:
            raise UsageError(f"no such file: {args.grid}") from None
        except ValueError as exc:
            raise UsageError(f"invalid grid CSV {args.grid}: {exc}") from None
    if not (args.classifier and args.box):
        raise UsageError("give --grid, or --classifier with --box")
    h = _classifier(args.classifier)
    box = _parse_box(args.box)
    if args.effective:
        return effective_grid(h, box, args.cell, _cost(args))
    return rasterize(h, box, args.cell)


# ---------------------------------------------------------------------------
# subcommands


def cmd_effective(args) -> str:
    fmt = _format(args, ("csv", "json", "svg"))
    h = _classifier(args.classifier)
    cost = _cost(args)
    if isinstance(h, GridSampled):
        grid = effective_of_grid(h.grid, cost)
        source = h.grid
    else:
        if not args.box:
            raise UsageError("--box is required for analytic classifiers")
        box = _parse_box(args.box)
        if len(box) != h.dim:
            raise UsageError(f"box has {len(box)} axes, classifier has d={h.dim}")
        grid = effective_grid(h, box, args.cell, cost)
        source = None
    if fmt == "csv":
        return grid.to_csv_string()
    if fmt == "json":
        return _json({"grid": grid.to_dict()})
    if grid.dim != 2:
        raise UsageError("svg output needs a 2-d grid")
    if source is None:
        source = rasterize(h, grid.box, grid.cell_size)
    return experiments.svg_overlay(source, grid)


def cmd_boundary(args) -> str:
    fmt = _format(args, ("csv", "json"))
    if args.classify:
        h = _classifier(args.classifier) if args.classifier else None
        if h is None:
            raise UsageError("--classify needs --classifier")
        x = _parse_point(args.classify)
        res = classify_boundary_point(h, x, _cost(args), args.resolution)
        doc = {"point": x.tolist(), "case": res.case.value, "witness": None if res.witness is None else np.asarray(res.witness).tolist()}
        if fmt == "csv":
            return _csv(["case"], [[res.case.value]])
        return _json(doc)
    grid = _grid_input(args)
    b = extract_boundary(grid)
    if args.curvature:
        b = annotate_curvature(b)
    cases = [""] * len(b)
    if args.cases:
        if not args.classifier or args.effective or args.grid:
            raise UsageError("--cases needs --classifier without --effective (cases live on the source boundary)")
        h = _classifier(args.classifier)
        cost = _cost(args)
        cases = [classify_boundary_point(h, p, cost, args.resolution).case.value for p in b.refined]
    axes = ["x", "y", "z"][: grid.dim]
    header = [*axes, *(f"n{a}" for a in axes), "kappa", "case"]
    rows = [[*(float(v) for v in r), c] for r, c in zip(b.to_rows(), cases)]
    if fmt == "csv":
        return _csv(header, rows)
    clean = [[None if isinstance(v, float) and np.isnan(v) else v for v in r] for r in rows]
    return _json({"columns": header, "rows": clean})


def cmd_check_impossible(args) -> str:
    _format(args, ("json",))
    g = _classifier(args.classifier)
    cost = _cost(args)
    if isinstance(g, GridSampled):
        box = g.grid.box
    elif args.box:
        box = _parse_box(args.box)
    else:
        raise UsageError("--box is required for analytic classifiers")
    report = impossibility.check_all(g, box, cost, args.resolution)
    return _json(report.to_dict())


def cmd_accuracy(args) -> str:
    _format(args, ("json",))
    try:
        data = Dataset.from_dict(_read_json(args.data))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid dataset {args.data}: {exc}") from None
    cost = _cost(args)
    if args.mode == "strategic":
        if not args.classifier:
            raise UsageError("--mode strategic needs --classifier")
        res = accuracy.strategic_accuracy(_classifier(args.classifier), data, cost, args.resolution)
    elif args.mode == "max-linear":
        res = accuracy.max_linear_accuracy(data)
    else:
        if len(data) > accuracy.MAX_STRATEGIC_POINTS:
            raise UsageError(f"max-strategic is capped at {accuracy.MAX_STRATEGIC_POINTS} points")
        res = accuracy.max_strategic_accuracy(data, cost, args.grid_step)
    return _json({"mode": args.mode, "alpha": cost.alpha, "norm": cost.norm.value, **res.to_dict()})


def cmd_vc_demo(args) -> str:
    _format(args, ("json",))
    name = args.fixture
    if name not in vc.FIXTURES:
        raise UsageError(f"unknown fixture {name!r}; choose from {sorted(vc.FIXTURES)}")
    alpha = args.alpha
    res = args.resolution
    if name == "four-balls":
        H = vc.build_fixture(name, alpha=alpha)
        cost = CostModel(Norm.L2, alpha)
        U = H.params["universe"]
        std = vc.exhaustive_vc(H, U, 3)
        eff = vc.exhaustive_vc(H, U, 3, True, cost, res)
        out = {"standard": asdict(std), "effective": asdict(eff), "universe": U}
    elif name == "scaled-lattice-balls":
        H = vc.build_fixture(name, alpha=alpha)
        cost = CostModel(Norm.L2, alpha)
        E = H.params["witnesses"]
        std = vc.shatters(H, E)
        eff = vc.shatters(H, E, True, cost, res)
        out = {"points": E, "standard_shattered": std.shattered, "effective_shattered": eff.shattered}
    elif name == "wipeout-lattice":
        H = vc.build_fixture(name, alpha=alpha)
        cost = CostModel(Norm.L2, alpha)
        U = H.params["universe"]
        std = vc.exhaustive_vc(H, U, len(U))
        eff = vc.exhaustive_vc(H, U, len(U), True, cost, res)
        lo, hi = np.min(U) - 2, np.max(U) + 2
        grids = vc.effective_grids(H, ((lo, hi), (lo, hi)), min(res, alpha / 4), cost)
        same = all(np.array_equal(g.labels, grids[0].labels) for g in grids)
        out = {
            "standard": asdict(std),
            "effective": asdict(eff),
            "universe": U,
            "effectives_identical": same,
            "effectives_all_positive": bool(grids[0].labels.all()),
        }
    else:
        H = vc.build_fixture(name)
        cost = CostModel(Norm.L2, alpha)
        contained = []
        box = ((-12.0, 12.0), (-12.0, 12.0))
        cell = min(res, alpha / 4)
        for h in H.classifiers:
            src = rasterize(h, box, cell)
            eff = effective_grid(h, box, cell, cost)
            # effective negatives lie inside source negatives
            contained.append(bool(np.all(src.labels <= eff.labels)))
        out = {"effective_negative_within_source": contained}
    return _json({"fixture": name, "alpha": alpha, "size": len(H), "params": H.params, **out})


def _load_doc(model: type[BaseModel], path: str) -> BaseModel:
    raw = _read_json(path)
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        raise UsageError(f"invalid config {path}:\n{exc}", model.model_json_schema(by_alias=True)) from None


def cmd_expressivity(args) -> str:
    fmt = _format(args, ("csv", "json", "svg"))
    doc = _load_doc(ExpressivityDoc, args.config)
    if args.seed is not None:
        doc = doc.model_copy(update={"seed": args.seed})
    try:
        cfg = doc.to_config()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if fmt == "svg":
        k, alpha = cfg.ks[0], cfg.alphas[0]
        return experiments.expressivity_svg(k, alpha, experiments.instance_seed(cfg.seed, k, 0), cfg.box, cfg.cell)
    rows = experiments.run_expressivity(cfg, args.threads)
    if args.svg:
        _check_out(args.svg)
        k, alpha = cfg.ks[0], cfg.alphas[-1]
        write_atomic(args.svg, experiments.expressivity_svg(k, alpha, experiments.instance_seed(cfg.seed, k, 0), cfg.box, cfg.cell))
    if fmt == "csv":
        return _csv(["k", "alpha", "k_delta", "instance_seed"], [astuple_row(r) for r in rows])
    agg = experiments.aggregate(rows, ("k", "alpha"), ("k_delta",))
    return _json({"rows": [asdict(r) for r in rows], "aggregates": agg})


def cmd_approximation(args) -> str:
    fmt = _format(args, ("csv", "json"))
    doc = _load_doc(ApproximationDoc, args.config)
    if args.seed is not None:
        doc = doc.model_copy(update={"seed": args.seed})
    try:
        cfg = doc.to_config()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = experiments.run_approximation(cfg, args.threads)
    if fmt == "csv":
        return _csv(["mu", "alpha", "max_linear", "max_strategic", "seed"], [astuple_row(r) for r in rows])
    agg = experiments.aggregate(rows, ("mu", "alpha"), ("max_linear", "max_strategic"))
    return _json({"rows": [asdict(r) for r in rows], "aggregates": agg})


def astuple_row(row) -> list:
    return list(asdict(row).values())


COMMANDS = {
    "effective": cmd_effective,
    "boundary": cmd_boundary,
    "check-impossible": cmd_check_impossible,
    "accuracy": cmd_accuracy,
    "vc-demo": cmd_vc_demo,
    "expressivity": cmd_expressivity,
    "approximation": cmd_approximation,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--format", choices=("csv", "json", "svg"), help="output format (default from --out suffix)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes for experiments")
    common.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    cost = argparse.ArgumentParser(add_help=False)
    cost.add_argument("--norm", default="l2", help="l1, l2 or linf")
    cost.add_argument("--alpha", type=float, default=1.0, help="manipulation budget")

    p = argparse.ArgumentParser(prog="strategex", description="Strategic classification geometry engine.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("effective", parents=[common, cost], help="rasterize an effective classifier")
    s.add_argument("--classifier", required=True)
    s.add_argument("--box", help='"x0,x1,y0,y1" or JSON pairs')
    s.add_argument("--cell", type=float, default=0.05)

    s = sub.add_parser("boundary", parents=[common, cost], help="extract a boundary or classify a boundary point")
    s.add_argument("--grid", help="grid CSV")
    s.add_argument("--classifier")
    s.add_argument("--box")
    s.add_argument("--cell", type=float, default=0.05)
    s.add_argument("--effective", action="store_true", help="use the effective grid of --classifier")
    s.add_argument("--curvature", action="store_true", help="estimate signed curvature (2-d)")
    s.add_argument("--cases", action="store_true", help="mapping case of every source boundary point")
    s.add_argument("--classify", metavar="X,Y", help="mapping case of this boundary point of --classifier")
    s.add_argument("--resolution", type=float, default=0.05)

    s = sub.add_parser("check-impossible", parents=[common, cost], help="test a candidate effective classifier")
    s.add_argument("--classifier", required=True)
    s.add_argument("--box")
    s.add_argument("--resolution", type=float, default=0.05)

    s = sub.add_parser("accuracy", parents=[common, cost], help="strategic or maximal accuracies")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=("strategic", "max-linear", "max-strategic"), required=True)
    s.add_argument("--classifier")
    s.add_argument("--resolution", type=float, default=0.05)
    s.add_argument("--grid-step", type=float)

    s = sub.add_parser("vc-demo", parents=[common], help="VC demonstrations on the canonical fixtures")
    s.add_argument("--fixture", required=True)
    s.add_argument("--alpha", type=float, default=0.75)
    s.add_argument("--resolution", type=float, default=0.05)

    s = sub.add_parser("expressivity", parents=[common], help="effective polynomial degree experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--svg", help="also write a boundary overlay for the first configuration")

    s = sub.add_parser("approximation", parents=[common], help="max linear vs max strategic accuracy experiment")
    s.add_argument("--config", required=True)
    return p


def _positive(args, *names) -> None:
    for n in names:
        v = getattr(args, n, None)
        if v is not None and not v > 0:
            raise UsageError(f"--{n.replace('_', '-')} must be positive")


def _join_negative_values(argv: list[str]) -> list[str]:
    """Let ``--box -2,2,-2,2`` through argparse, which reads ``-2,...`` as a flag."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in ("--box", "--classify") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        _positive(args, "alpha", "cell", "resolution", "grid_step")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        _check_out(args.out)
        text = COMMANDS[args.command](args)
        write_atomic(args.out, text)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.schema is not None:
            print(json.dumps(exc.schema, indent=2), file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failures
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
