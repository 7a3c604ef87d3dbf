"""Command-line front end.

Subcommands certify single pairs, sweep the inverse-certificate parameter
space, project onto group orbits, run smoothed prediction with synthetic
classifiers, and generate CSV fixtures.  All Monte-Carlo commands require an
explicit --seed; outputs are JSON documents (schema 1) and CSV grids whose
numbers round-trip exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from .geometry import (
    GroupKind,
    GroupSpec,
    PointCloud,
    epsilon_params,
    load_points_csv,
    rot2,
    save_points_csv,
)
from .mc import ABSTAIN, McConfig, smooth_predict
from .numerics import NumericalFailure
from .oracles import make_classifier
from .orbit import CertificateOutcome, certify_orbit, project
from .tight import (
    certify_multiclass,
    certify_rotation_tight,
    pmin_grid,
    tight_translation,
)

_GROUPS = {
    "T": GroupKind.TRANSLATION,
    "SO": GroupKind.ROTATION,
    "O": GroupKind.ORTHOGONAL,
    "SE": GroupKind.ROTO_TRANSLATION,
    "S": GroupKind.PERMUTATION,
    "SxSE": GroupKind.PERMUTATION_ROTO_TRANSLATION,
}

_TIGHT_GROUPS = {"T", "SO", "SE"}


class UsageError(Exception):
    """Input or flag error; maps to exit code 2."""


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def _load_cloud(path: str, flag: str) -> PointCloud:
    try:
        return load_points_csv(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"{flag}: {exc}") from exc


def _group_spec(name: str, dim: int) -> GroupSpec:
    return GroupSpec(_GROUPS[name], dim)


def _outcome_dict(outcome: CertificateOutcome) -> dict:
    out = dataclasses.asdict(outcome)
    out["notes"] = list(outcome.notes)
    out["confidences"] = list(outcome.confidences)
    out["margin"] = outcome.margin
    return out


def _document(command: str, parameters: dict, inputs: dict, results: dict) -> dict:
    return {
        "schema": 1,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "manifest": {
            "command": command,
            "parameters": parameters,
            "inputs": inputs,
            "version": __version__,
        },
        "results": results,
    }


def _emit(doc: dict, out_path: str | None) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _resolve_p_lower(args, clean: PointCloud) -> tuple[float, int | None]:
    if args.p_lower is not None:
        return args.p_lower, None
    if args.classifier is None:
        raise UsageError("--p-lower or --classifier is required")
    g = make_classifier(args.classifier, args.tau, clean)
    label, p_lower = smooth_predict(
        g, clean, args.sigma, args.n1, args.alpha, args.seed
    )
    return p_lower, label

def cmd_certify(args) -> int:
    clean = _load_cloud(args.clean, "--clean")
    perturbed = _load_cloud(args.perturbed, "--perturbed")
    if clean.data.shape != perturbed.data.shape:
        raise UsageError("--perturbed: shape differs from --clean")
    if args.sigma <= 0:
        raise UsageError("--sigma: must be > 0")
    if args.method in ("tight", "both") and args.group not in _TIGHT_GROUPS:
        raise UsageError(
            f"--method {args.method}: tight certificates support groups T, SO, SE"
            f" (got --group {args.group})"
        )
    group = _group_spec(args.group, clean.dim)
    p_lower, label = _resolve_p_lower(args, clean)
    mc = McConfig(n1=args.n1, n2=args.n2, n3=args.n3, alpha=args.alpha)
    results: dict = {"p_lower": p_lower}
    if label is not None:
        results["classifier_label"] = "ABSTAIN" if label == ABSTAIN else label
    if args.method in ("orbit", "both"):
        results["orbit"] = _outcome_dict(
            certify_orbit(group, clean, perturbed, p_lower, args.sigma)
        )
    if args.method in ("tight", "both"):
        if group.kind is GroupKind.TRANSLATION:
            outcome = tight_translation(clean, perturbed, p_lower, args.sigma)
        else:
            outcome = certify_rotation_tight(
                group, clean, perturbed, p_lower, args.sigma, mc, args.seed,
                quad_degree=args.quad_degree,
            )
        results["tight"] = _outcome_dict(outcome)
    if args.multiclass:
        if args.p_upper is None:
            raise UsageError("--multiclass: requires --p-upper")
        results["multiclass"] = _outcome_dict(
            certify_multiclass(
                group, clean, perturbed, p_lower, args.p_upper, args.sigma,
                mc, args.seed, quad_degree=args.quad_degree,
            )
        )
    parameters = {
        "group": args.group,
        "sigma": args.sigma,
        "p_lower": args.p_lower,
        "classifier": args.classifier,
        "tau": args.tau,
        "alpha": args.alpha,
        "n1": args.n1,
        "n2": args.n2,
        "n3": args.n3,
        "seed": args.seed,
        "method": args.method,
        "quad_degree": args.quad_degree,
        "multiclass": args.multiclass,
        "p_upper": args.p_upper,
    }
    inputs = {
        "clean": {"path": args.clean, "sha256": _sha256(args.clean)},
        "perturbed": {"path": args.perturbed, "sha256": _sha256(args.perturbed)},
    }
    _emit(_document("certify", parameters, inputs, results), args.out)
    return 0


def cmd_project(args) -> int:
    clean = _load_cloud(args.clean, "--clean")
    perturbed = _load_cloud(args.perturbed, "--perturbed")
    if clean.data.shape != perturbed.data.shape:
        raise UsageError("--perturbed: shape differs from --clean")
    group = _group_spec(args.group, clean.dim)
    proj = project(group, clean, perturbed, max_iters=args.max_iters)
    results = {
        "residual": proj.residual,
        "transform": proj.transform_description(),
        "exact": proj.exact,
    }
    parameters = {"group": args.group, "max_iters": args.max_iters}
    inputs = {
        "clean": {"path": args.clean, "sha256": _sha256(args.clean)},
        "perturbed": {"path": args.perturbed, "sha256": _sha256(args.perturbed)},
    }
    _emit(_document("project", parameters, inputs, results), args.out)
    return 0


def cmd_smooth_predict(args) -> int:
    cloud = _load_cloud(args.input, "--input")
    if args.sigma <= 0:
        raise UsageError("--sigma: must be > 0")
    g = make_classifier(args.classifier, args.tau, cloud)
    label, p_lower = smooth_predict(
        g, cloud, args.sigma, args.n1, args.alpha, args.seed
    )
    results = {
        "label": "ABSTAIN" if label == ABSTAIN else label,
        "p_lower": p_lower,
    }
    parameters = {
        "classifier": args.classifier,
        "tau": args.tau,
        "sigma": args.sigma,
        "n1": args.n1,
        "alpha": args.alpha,
        "seed": args.seed,
    }
    inputs = {"input": {"path": args.input, "sha256": _sha256(args.input)}}
    _emit(_document("smooth-predict", parameters, inputs, results), args.out)
    return 0


def cmd_pmin_grid(args) -> int:
    if args.norm_x < 0 or args.norm_delta < 0:
        raise UsageError("--norm-x/--norm-delta: must be >= 0")
    if args.sigma <= 0:
        raise UsageError("--sigma: must be > 0")
    if args.resolution < 2:
        raise UsageError("--resolution: must be >= 2")
    group = None if args.group == "blackbox" else GroupSpec(GroupKind.ROTATION, 2)
    mc = McConfig(n1=args.n1, n2=args.n2, n3=args.n3, alpha=args.alpha)
    grid = pmin_grid(
        group, args.norm_x, args.norm_delta, args.sigma, args.resolution, mc, args.seed
    )
    if args.diff == "blackbox":
        from .numerics import std_normal_cdf

        reference = std_normal_cdf(args.norm_delta / args.sigma)
        cells = reference - grid.values
    else:
        cells = grid.values
    lines = []
    for i in range(args.resolution):
        row = [
            "INF" if grid.infeasible[i, j] else repr(float(cells[i, j]))
            for j in range(args.resolution)
        ]
        lines.append(",".join(row))
    with open(args.out_csv, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    scale = args.norm_x * args.norm_delta
    loci = [
        {
            "eps1": locus.eps1,
            "eps2": locus.eps2,
            "eps1_normalized": locus.eps1 / scale if scale > 0 else 0.0,
            "eps2_normalized": locus.eps2 / scale if scale > 0 else 0.0,
        }
        for locus in grid.loci
    ]
    parameters = {
        "group": args.group,
        "norm_x": args.norm_x,
        "norm_delta": args.norm_delta,
        "sigma": args.sigma,
        "resolution": args.resolution,
        "seed": args.seed,
        "alpha": args.alpha,
        "n1": args.n1,
        "n2": args.n2,
        "n3": args.n3,
        "diff": args.diff,
    }
    results = {
        "csv": args.out_csv,
        "eps1_nodes": grid.eps1_nodes.tolist(),
        "eps2_nodes": grid.eps2_nodes.tolist(),
        "adversarial_rotation_loci": loci,
        "infeasible_cells": int(grid.infeasible.sum()),
    }
    _emit(_document("pmin-grid", parameters, {}, results), args.out_json)
    return 0


def cmd_fixture(args) -> int:
    if args.norm_x <= 0:
        raise UsageError("--norm-x: must be > 0")
    rng = np.random.default_rng(args.seed)
    base = rng.standard_normal((args.n_points, args.dim))
    base *= args.norm_x / np.linalg.norm(base)
    if args.scenario == "scaling":
        if args.norm_delta is None:
            raise UsageError("--norm-delta: required for the scaling scenario")
        delta = base * (args.norm_delta / args.norm_x)
    elif args.scenario == "rotation":
        if args.dim != 2:
            raise UsageError("--scenario rotation: requires --dim 2")
        if args.theta is not None:
            theta = args.theta
        elif args.norm_delta is not None:
            ratio = 1.0 - args.norm_delta**2 / (2.0 * args.norm_x**2)
            if ratio < -1.0:
                raise UsageError(
                    "--norm-delta: no rotation reaches this norm (needs <= 2 |X|)"
                )
            theta = float(np.arccos(ratio))
        else:
            raise UsageError("--theta or --norm-delta: required for rotation scenario")
        delta = base @ rot2(theta).T - base
    elif args.scenario == "random":
        if args.norm_delta is None:
            raise UsageError("--norm-delta: required for the random scenario")
        delta = rng.standard_normal((args.n_points, args.dim))
        delta *= args.norm_delta / np.linalg.norm(delta)
    else:  # argparse choices guard this
        raise UsageError(f"--scenario: unknown {args.scenario!r}")
    clean = PointCloud(base)
    perturbed = PointCloud(base + delta)
    save_points_csv(args.out_clean, clean)
    save_points_csv(args.out_perturbed, perturbed)
    results = {
        "norm_x": clean.norm(),
        "norm_delta": float(np.linalg.norm(delta)),
        "clean": args.out_clean,
        "perturbed": args.out_perturbed,
    }
    if args.dim == 2:
        eps = epsilon_params(clean, delta)
        results["eps1"] = eps.eps1
        results["eps2"] = eps.eps2
    parameters = {
        "scenario": args.scenario,
        "norm_x": args.norm_x,
        "norm_delta": args.norm_delta,
        "theta": args.theta,
        "n_points": args.n_points,
        "dim": args.dim,
        "seed": args.seed,
    }
    _emit(_document("fixture", parameters, {}, results), args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invarcert",
        description="Robustness certificates for invariant point-cloud classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    certify = sub.add_parser("certify", help="certify one clean/perturbed pair")
    certify.add_argument("--group", required=True, choices=sorted(_GROUPS))
    certify.add_argument("--clean", required=True)
    certify.add_argument("--perturbed", required=True)
    certify.add_argument("--sigma", type=float, required=True)
    certify.add_argument("--p-lower", type=float, default=None)
    certify.add_argument("--classifier", choices=["norm", "centered-norm", "pairwise-centroid"])
    certify.add_argument("--tau", type=float, default=1.0)
    certify.add_argument("--alpha", type=float, default=0.001)
    certify.add_argument("--n1", type=int, default=10000)
    certify.add_argument("--n2", type=int, default=10000)
    certify.add_argument("--n3", type=int, default=10000)
    certify.add_argument("--seed", type=int, required=True)
    certify.add_argument("--method", choices=["orbit", "tight", "both"], default="both")
    certify.add_argument("--quad-degree", type=int, default=20)
    certify.add_argument("--multiclass", action="store_true")
    certify.add_argument("--p-upper", type=float, default=None)
    certify.add_argument("--out", default=None)
    certify.set_defaults(func=cmd_certify)

    proj = sub.add_parser("project", help="orbit projection of a pair")
    proj.add_argument("--group", required=True, choices=sorted(_GROUPS))
    proj.add_argument("--clean", required=True)
    proj.add_argument("--perturbed", required=True)
    proj.add_argument("--max-iters", type=int, default=50)
    proj.add_argument("--out", default=None)
    proj.set_defaults(func=cmd_project)

    smooth = sub.add_parser("smooth-predict", help="smoothed prediction with abstention")
    smooth.add_argument(
        "--classifier", required=True,
        choices=["norm", "centered-norm", "pairwise-centroid"],
    )
    smooth.add_argument("--input", required=True)
    smooth.add_argument("--tau", type=float, default=1.0)
    smooth.add_argument("--sigma", type=float, required=True)
    smooth.add_argument("--n1", type=int, default=1000)
    smooth.add_argument("--alpha", type=float, default=0.001)
    smooth.add_argument("--seed", type=int, required=True)
    smooth.add_argument("--out", default=None)
    smooth.set_defaults(func=cmd_smooth_predict)

    grid = sub.add_parser("pmin-grid", help="inverse-certificate parameter sweep")
    grid.add_argument("--group", required=True, choices=["blackbox", "SO2"])
    grid.add_argument("--norm-x", type=float, required=True)
    grid.add_argument("--norm-delta", type=float, required=True)
    grid.add_argument("--sigma", type=float, required=True)
    grid.add_argument("--resolution", type=int, required=True)
    grid.add_argument("--seed", type=int, required=True)
    grid.add_argument("--alpha", type=float, default=0.001)
    grid.add_argument("--n1", type=int, default=10000)
    grid.add_argument("--n2", type=int, default=10000)
    grid.add_argument("--n3", type=int, default=10000)
    grid.add_argument("--diff", choices=["blackbox"], default=None)
    grid.add_argument("--out-csv", required=True)
    grid.add_argument("--out-json", default=None)
    grid.set_defaults(func=cmd_pmin_grid)

    fixture = sub.add_parser("fixture", help="generate CSV point-cloud fixtures")
    fixture.add_argument(
        "--scenario", required=True, choices=["scaling", "rotation", "random"]
    )
    fixture.add_argument("--norm-x", type=float, required=True)
    fixture.add_argument("--norm-delta", type=float, default=None)
    fixture.add_argument("--theta", type=float, default=None)
    fixture.add_argument("--n-points", type=int, default=16)
    fixture.add_argument("--dim", type=int, default=2, choices=[2, 3])
    fixture.add_argument("--seed", type=int, required=True)
    fixture.add_argument("--out-clean", required=True)
    fixture.add_argument("--out-perturbed", required=True)
    fixture.add_argument("--out", default=None)
    fixture.set_defaults(func=cmd_fixture)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
