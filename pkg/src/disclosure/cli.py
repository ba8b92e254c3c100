"""Command-line entry point: ``disclosure {analyze,frontier,verify,oracle}``.

Each command reads one instance file, prints a JSON report on stdout and,
with ``--out DIR``, writes CSV/JSON artefacts there. Exit codes: 0 success,
2 bad input or violated assumption, 3 failed verification.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .certify import (
    MONO_TOL, Q_TOL, SLACK_TOL, CertificateError, build_certificate, log_concavity_check, peak_checks,
    verify_certificate,
)
from .frontier import full_disclosure_point, no_disclosure_point, trace_frontier, write_frontier_csv
from .model import AssumptionError, ModelInstance, canonicalize, participation_floor, peak_emission, validate_assumptions
from .oracle import (
    all_outcomes, discrete_pareto_frontier, discretize, intro_fixture, oracle_vs_threshold, write_menus_csv,
)
from .policy import DisclosurePolicy, expected_outcomes, policy_outcomes
from .quadrature import QUAD_NODES
from .threshold import foc_residual, optimize_threshold, threshold_scheme, welfare

log = logging.getLogger("disclosure")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VERIFY = 3
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class InputError(Exception):
    def __init__(self, message: str, report: dict[str, Any] | None = None):
        super().__init__(message)
        self.report = report


class VerificationFailure(Exception):
    def __init__(self, message: str, report: dict[str, Any] | None = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class RunConfig:
    command: str
    config: Path | None
    out: Path | None
    alpha: float | None
    alpha_count: int
    threshold: float | None
    type_grid: int
    emission_grid: int
    quad_nodes: int
    grid: int | None
    tol: float | None

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        cfg = cls(
            command=ns.command,
            config=Path(ns.config) if ns.config else None,
            out=Path(ns.out) if ns.out else None,
            alpha=ns.alpha,
            alpha_count=ns.alphas,
            threshold=ns.threshold,
            type_grid=ns.type_grid,
            emission_grid=ns.emission_grid,
            quad_nodes=ns.quad_nodes,
            grid=ns.grid,
            tol=ns.tol,
        )
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.config is not None and not self.config.is_file():
            raise InputError(f"config file not found: {self.config}")
        if self.config is None and self.command != "oracle":
            raise InputError(f"'{self.command}' needs --config PATH")
        if self.alpha is not None and not (0.0 <= self.alpha <= 1.0 and math.isfinite(self.alpha)):
            raise InputError(f"--alpha must lie in [0, 1], got {self.alpha}")
        if self.alpha_count < 2:
            raise InputError("--alphas must be at least 2")
        if self.quad_nodes < 1:
            raise InputError("--quad-nodes must be positive")
        if self.grid is not None and self.grid < 2:
            raise InputError("--grid must be at least 2")
        if self.tol is not None and not self.tol >= 0:
            raise InputError("--tol must be non-negative")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="instance JSON file")
    common.add_argument("--out", metavar="PATH", help="directory for CSV/JSON artefacts")
    common.add_argument("--alpha", type=float, metavar="X", help="emission weight in [0, 1]")
    common.add_argument("--alphas", type=int, default=101, metavar="N", help="weights in the frontier sweep")
    common.add_argument("--threshold", type=float, metavar="X", help="threshold emission to certify")
    common.add_argument("--type-grid", type=int, default=21, metavar="N", help="oracle type cells")
    common.add_argument("--emission-grid", type=int, default=11, metavar="N", help="oracle emission levels")
    common.add_argument("--quad-nodes", type=int, default=QUAD_NODES, metavar="N",
                        help="Gauss-Legendre nodes per smooth piece")
    common.add_argument("--grid", type=int, metavar="N", help="type grid for tables and certificates")
    common.add_argument("--tol", type=float, metavar="X", help="override certificate tolerances")

    p = argparse.ArgumentParser(prog="disclosure", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="validate an instance and tabulate peak/floor emissions")
    sub.add_parser("frontier", parents=[common], help="trace the emission/profit frontier of threshold policies")
    sub.add_parser("verify", parents=[common], help="build and check the optimality certificate at one weight")
    sub.add_parser("oracle", parents=[common],
                   help="brute-force discrete frontier (built-in three-level example without --config)")
    return p


def _load(path: Path) -> tuple[ModelInstance, str]:
    try:
        doc = json.loads(path.read_text())
        inst = ModelInstance.from_dict(doc)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from exc
    digest = hashlib.sha256(json.dumps(inst.to_dict(), sort_keys=True).encode()).hexdigest()
    return inst, digest


def _outdir(cfg: RunConfig) -> Path | None:
    if cfg.out is None:
        return None
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=2, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def _canonical_echo(inst: ModelInstance) -> dict[str, Any]:
    c = canonicalize(inst, check=False)
    return {
        "scale": c.scale,
        "orientation_flipped": inst.slope_a > 0,
        "single_type": c.is_degenerate,
        "canonical_support": [c.type_lower, c.type_upper],
        "profit_offset": c.profit_offset,
        "note": "canonical types are -a * theta; the expected -b*theta term is added back to profits",
    }


def cmd_analyze(cfg: RunConfig) -> dict[str, Any]:
    inst, digest = _load(cfg.config)
    report = validate_assumptions(inst)
    result: dict[str, Any] = {"command": "analyze", "instance_sha256": digest, "validation": report,
                              "canonicalization": _canonical_echo(inst)}
    if not report["ok"]:
        failed = [f"{i['name']}: {i['detail']}" for i in report["items"] if not i["pass"]]
        raise InputError("assumptions violated; " + "; ".join(failed), result)
    c = canonicalize(inst)
    n = cfg.grid or 101
    theta = inst.type_grid(n)
    e_hat = np.atleast_1d(peak_emission(inst, theta))
    e_floor = np.atleast_1d(participation_floor(inst, theta))
    full = expected_outcomes(c, threshold_scheme(c, c.peak_range[1]), cfg.quad_nodes)
    none = policy_outcomes(inst, DisclosurePolicy.no_disclosure(inst.emission_cap), cfg.quad_nodes)
    result["full_disclosure"] = {"gamma": full[0], "pi": full[1]}
    result["no_disclosure"] = {"gamma": none[0], "pi": none[1]}
    result["log_concavity"] = log_concavity_check(c)
    out = _outdir(cfg)
    if out:
        with open(out / "emissions.csv", "w") as fh:
            fh.write(f"# instance sha256={digest}\n")
            fh.write("theta,e_hat,e_floor\n")
            for t, a, b in zip(theta, e_hat, e_floor):
                fh.write(f"{t:.12g},{a:.12g},{b:.12g}\n")
        _write_json(out / "analyze.json", result)
    return result


def cmd_frontier(cfg: RunConfig) -> dict[str, Any]:
    inst, digest = _load(cfg.config)
    c = canonicalize(inst)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pts = trace_frontier(c, cfg.alpha_count)
    result = {
        "command": "frontier", "instance_sha256": digest, "alpha_count": cfg.alpha_count,
        "points": [p.to_dict() for p in pts],
        "full_disclosure": full_disclosure_point(c).to_dict(),
        "no_disclosure": no_disclosure_point(c).to_dict(),
        "warnings": sorted({str(w.message) for w in caught}),
    }
    out = _outdir(cfg)
    if out:
        write_frontier_csv(out / "frontier.csv", pts, header_comment=f"instance sha256={digest}")
        _write_json(out / "frontier.json", result)
    return result


def cmd_verify(cfg: RunConfig) -> dict[str, Any]:
    if cfg.alpha is None:
        raise InputError("verify needs --alpha")
    inst, digest = _load(cfg.config)
    c = canonicalize(inst)
    alpha = cfg.alpha
    if cfg.threshold is None:
        sp = optimize_threshold(c, alpha)
        e_star, source = sp.e_star, f"optimized ({sp.method})"
    else:
        e_star, source = cfg.threshold, "given"
    case, resid = foc_residual(c, e_star, alpha, cfg.quad_nodes)
    result: dict[str, Any] = {
        "command": "verify", "instance_sha256": digest, "alpha": alpha, "e_star": e_star,
        "threshold_source": source, "foc_case": case.name, "foc_residual": resid,
        "welfare": welfare(c, e_star, alpha, cfg.quad_nodes),
    }
    try:
        cert = build_certificate(c, alpha, e_star, grid=cfg.grid or 801)
    except CertificateError as exc:
        result["error"] = str(exc)
        raise VerificationFailure(f"precondition failed: {exc}", result) from exc
    tol = cfg.tol
    report = verify_certificate(cert, mono_tol=MONO_TOL if tol is None else tol,
                                q_tol=Q_TOL if tol is None else tol, slack_tol=SLACK_TOL if tol is None else tol)
    result["certificate"] = report
    result["peak_checks"] = peak_checks(c, alpha, e_star)
    out = _outdir(cfg)
    if out:
        _write_json(out / "verify.json", result)
    if not report["all_pass"]:
        failed = [i["name"] for i in report["conditions"] if not i["pass"]]
        raise VerificationFailure("certificate conditions failed: " + ", ".join(failed), result)
    return result


def _fixture_report(out: Path | None) -> dict[str, Any]:
    d = intro_fixture()
    masks, gam, pi, assign = all_outcomes(d, with_assignments=True)
    menus = [{"menu": d.menu_labels(int(m)), "bitmask": int(m), "choice": d.label(int(a[0])),
              "gamma": float(g), "profit": float(p)} for m, g, p, a in zip(masks, gam, pi, assign)]
    front = discrete_pareto_frontier(d)
    digest = hashlib.sha256(b"built-in three-level example").hexdigest()
    result = {"command": "oracle", "instance": "built-in three-level example", "instance_sha256": digest,
              "menus": menus,
              "frontier": [{"menu": d.menu_labels(m), "gamma": g, "pi": p} for g, p, m in front]}
    if out:
        write_menus_csv(out / "menus.csv", d, front, header_comment=f"instance sha256={digest}")
        _write_json(out / "oracle.json", result)
    return result


def cmd_oracle(cfg: RunConfig) -> dict[str, Any]:
    out = _outdir(cfg)
    if cfg.config is None:
        return _fixture_report(out)
    inst, digest = _load(cfg.config)
    c = canonicalize(inst)
    try:
        d = discretize(c, cfg.type_grid, cfg.emission_grid)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    report = oracle_vs_threshold(c, cfg.type_grid, cfg.emission_grid)
    result = {"command": "oracle", "instance_sha256": digest, "report": report}
    if out:
        write_menus_csv(out / "menus.csv", d, discrete_pareto_frontier(d),
                        header_comment=f"instance sha256={digest}")
        _write_json(out / "oracle.json", result)
    return result


COMMANDS = {"analyze": cmd_analyze, "frontier": cmd_frontier, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("DISCLOSURE_LOG", "").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    ns = _parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(ns)
        log.info("running %s on %s", cfg.command, cfg.config or "built-in example")
        result = COMMANDS[cfg.command](cfg)
    except (InputError, AssumptionError, ValueError) as exc:
        if getattr(exc, "report", None) is not None:
            print(json.dumps(exc.report, indent=2, default=_jsonable))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VerificationFailure as exc:
        if exc.report is not None:
            print(json.dumps(exc.report, indent=2, default=_jsonable))
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    print(json.dumps(result, indent=2, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
