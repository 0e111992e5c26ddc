"""Batch command line: generate synthetic scenes, run the sampler,
evaluate estimates against ground truth.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 I/O or data-format failure.  Every run writes the fully resolved
configuration (defaults and flag overrides applied) next to its outputs
as ``config.resolved``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from typing import Optional

import numpy as np

from .chmc import ChmcConfig
from .data import (
    ResultBundle,
    load_cube,
    load_library,
    load_results,
    save_cube,
    save_library,
    save_results,
)
from .errors import ConfigError, DataFormatError, GncmixError, NumericError
from .metrics import (
    align_endmembers,
    align_labels,
    armse_abundance,
    classification_accuracy,
    endmember_errors,
    reconstruction_errors,
)
from .priors import HyperParams
from .sampler import SamplerConfig, initialize_state, phase_stream, run_sampler
from .synth import NoiseSpec, generate_scene, sample_potts_field, synthetic_library

CUBE_FILE = "cube.raw"
LIBRARY_FILE = "library.json"
TRUTH_DIR = "truth"


# ---------------------------------------------------------------------------
# config parsing helpers


class _Resolved:
    """Collects the effective configuration for config.resolved."""

    def __init__(self) -> None:
        self.parser = configparser.ConfigParser()

    def set(self, section: str, key: str, value) -> None:
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser.set(section, key, str(value))

    def write(self, out_dir: str) -> None:
        with open(os.path.join(out_dir, "config.resolved"), "w") as fh:
            self.parser.write(fh)


def _read_ini(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parser


def _get(parser, section: str, key: str, cast, default=None, missing: Optional[list] = None):
    if parser.has_option(section, key):
        raw = parser.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    if default is None and missing is not None:
        missing.append(f"{section}.{key}")
        return None
    return default


def _float_list(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args: argparse.Namespace) -> int:
    parser = _read_ini(args.config)
    missing: list[str] = []
    width = _get(parser, "scene", "width", int, missing=missing)
    height = _get(parser, "scene", "height", int, missing=missing)
    K = _get(parser, "scene", "K", int, missing=missing)
    R = _get(parser, "scene", "R", int, missing=missing)
    L = _get(parser, "scene", "L", int, missing=missing)
    seed = _get(parser, "scene", "seed", int, missing=missing)
    if missing:
        raise ConfigError("missing config keys: " + ", ".join(missing))
    beta = _get(parser, "scene", "beta", float, default=1.5)
    potts_sweeps = _get(parser, "scene", "potts_sweeps", int, default=500)
    cap = _get(parser, "scene", "cap", float, default=0.9)

    dirichlet = np.empty((R, K))
    for k in range(K):
        row = _get(parser, "dirichlet", f"class_{k + 1}", _float_list, missing=missing)
        if row is None:
            continue
        if len(row) != R:
            raise ConfigError(f"dirichlet.class_{k + 1} must list R={R} values")
        dirichlet[:, k] = row
    if missing:
        raise ConfigError("missing config keys: " + ", ".join(missing))

    kind = _get(parser, "noise", "kind", str, default="constant")
    psi2 = _get(parser, "noise", "psi2", float, default=1e-7)
    noise = NoiseSpec(kind=kind, psi2=psi2)

    source = _get(parser, "endmembers", "source", str, default="synthetic")
    with_var = _get(parser, "endmembers", "variances", str, default="yes") != "no"

    rng = phase_stream(seed, "init", 0)
    if source == "synthetic":
        lib = synthetic_library(L, R, rng, with_variances=with_var)
    elif source == "file":
        path = _get(parser, "endmembers", "library", str, missing=missing)
        if missing:
            raise ConfigError("missing config keys: " + ", ".join(missing))
        lib = load_library(path)
        if lib.means.shape != (L, R):
            raise ConfigError(f"library shape {lib.means.shape} != ({L}, {R})")
    else:
        raise ConfigError(f"unknown endmembers.source {source!r}")

    field = sample_potts_field(width, height, K, beta, potts_sweeps, rng)
    cube, truth = generate_scene(lib, dirichlet, field, noise, cap, rng)

    os.makedirs(args.out, exist_ok=True)
    save_cube(cube, os.path.join(args.out, CUBE_FILE), format="raw-f64")
    save_library(lib, os.path.join(args.out, LIBRARY_FILE))
    truth_bundle = ResultBundle(
        abundances=truth.abundances(),
        labels=truth.z,
        noise_var=truth.Psi,
        endmember_means=truth.M,
        endmember_vars=truth.Sigma,
        dirichlet=truth.C,
        meta={"width": width, "height": height, "seed": seed, "kind": "ground-truth"},
    )
    save_results(truth_bundle, os.path.join(args.out, TRUTH_DIR))
    manifest = {
        "width": width,
        "height": height,
        "K": K,
        "R": R,
        "L": L,
        "beta": beta,
        "cap": cap,
        "potts_sweeps": potts_sweeps,
        "seed": seed,
        "noise": {"kind": kind, "psi2": psi2},
        "endmembers": {"source": source, "variances": with_var},
        "files": {"cube": CUBE_FILE, "library": LIBRARY_FILE, "truth": TRUTH_DIR},
    }
    with open(os.path.join(args.out, "truth.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    resolved = _Resolved()
    for key, value in (
        ("width", width), ("height", height), ("K", K), ("R", R), ("L", L),
        ("beta", beta), ("potts_sweeps", potts_sweeps), ("cap", cap), ("seed", seed),
    ):
        resolved.set("scene", key, value)
    for k in range(K):
        resolved.set("dirichlet", f"class_{k + 1}", ", ".join(repr(v) for v in dirichlet[:, k]))
    resolved.set("noise", "kind", kind)
    resolved.set("noise", "psi2", repr(psi2))
    resolved.set("endmembers", "source", source)
    resolved.set("endmembers", "variances", "yes" if with_var else "no")
    resolved.write(args.out)
    return 0


# ---------------------------------------------------------------------------
# unmix


def _cube_format(path: str, explicit: str) -> str:
    if explicit != "auto":
        return explicit
    return "csv" if path.endswith(".csv") else "raw-f64"


def cmd_unmix(args: argparse.Namespace) -> int:
    parser = _read_ini(args.config)

    n_total = args.iters if args.iters is not None else _get(parser, "sampler", "iters", int, default=3000)
    n_burn_in = args.burn_in if args.burn_in is not None else _get(parser, "sampler", "burn_in", int, default=2000)
    seed = args.seed if args.seed is not None else _get(parser, "sampler", "seed", int, default=0)
    thinning = _get(parser, "sampler", "thinning", int, default=1)
    progress = _get(parser, "sampler", "progress_every", int, default=100)

    K = args.k_classes if args.k_classes is not None else _get(parser, "hyper", "K", int, default=1)
    R = args.r_endmembers if args.r_endmembers is not None else _get(parser, "hyper", "R", int, default=3)
    beta = args.beta if args.beta is not None else _get(parser, "hyper", "beta", float, default=1.5)
    hyper = HyperParams(
        K=K,
        R=R,
        lam=_get(parser, "hyper", "lambda", float, default=1e7),
        alpha=_get(parser, "hyper", "alpha", float, default=1e-3),
        gamma=_get(parser, "hyper", "gamma", float, default=1e-3),
        epsilon2=_get(parser, "hyper", "epsilon2", float, default=1e-2),
        beta=beta,
    )

    n_leapfrog = _get(parser, "chmc", "n_leapfrog", int, default=10)
    jitter = _get(parser, "chmc", "jitter", float, default=0.2)
    target_accept = _get(parser, "chmc", "target_accept", float, default=0.75)
    chmc = {
        name: ChmcConfig(
            step_size=_get(parser, "chmc", f"step_{name}", float, default=0.1),
            n_leapfrog=n_leapfrog,
            jitter=jitter,
            target_accept=target_accept,
            max_step=2.0 if name in ("t", "m") else None,
        )
        for name in ("t", "m", "sigma", "psi", "c")
    }

    cube = load_cube(args.cube, format=_cube_format(args.cube, args.cube_format))

    library = None
    lib_path = args.library or _get(parser, "endmembers", "library", str, default="")
    if lib_path:
        library = load_library(lib_path)

    cfg = SamplerConfig(
        n_burn_in=n_burn_in,
        n_total=n_total,
        seed=seed,
        hyper=hyper,
        thinning=thinning,
        chmc=chmc,
        fix_noise_zero=args.fix_noise_zero,
        progress_every=progress,
    )
    init = initialize_state(
        cube, R, K, hyper, init_endmembers=library, rng=phase_stream(seed, "init", 0)
    )
    summary = run_sampler(cube, init, cfg)

    os.makedirs(args.out, exist_ok=True)
    bundle = ResultBundle(
        abundances=summary.A_mmse,
        labels=summary.z_map,
        noise_var=summary.Psi_mmse,
        endmember_means=summary.M_mmse,
        endmember_vars=summary.Sigma_mmse,
        dirichlet=summary.C_mmse,
        meta={
            "width": cube.width,
            "height": cube.height,
            "iters": n_total,
            "burn_in": n_burn_in,
            "thinning": thinning,
            "kept_samples": summary.kept_samples,
            "seed": seed,
            "threads": args.threads,
            "fix_noise_zero": bool(args.fix_noise_zero),
            "acceptance_rates": summary.acceptance_rates,
            "step_sizes": summary.step_sizes,
        },
    )
    save_results(bundle, args.out)

    traces_dir = os.path.join(args.out, "traces")
    os.makedirs(traces_dir, exist_ok=True)
    _write_trace(summary.trace, R, K, os.path.join(traces_dir, "trace.csv"))

    resolved = _Resolved()
    resolved.set("sampler", "iters", n_total)
    resolved.set("sampler", "burn_in", n_burn_in)
    resolved.set("sampler", "thinning", thinning)
    resolved.set("sampler", "seed", seed)
    resolved.set("sampler", "progress_every", progress)
    resolved.set("sampler", "threads", args.threads)
    resolved.set("sampler", "fix_noise_zero", args.fix_noise_zero)
    resolved.set("hyper", "K", K)
    resolved.set("hyper", "R", R)
    resolved.set("hyper", "lambda", repr(hyper.lam))
    resolved.set("hyper", "alpha", repr(hyper.alpha))
    resolved.set("hyper", "gamma", repr(hyper.gamma))
    resolved.set("hyper", "epsilon2", repr(hyper.epsilon2))
    resolved.set("hyper", "beta", repr(hyper.beta))
    resolved.set("chmc", "n_leapfrog", n_leapfrog)
    resolved.set("chmc", "jitter", repr(jitter))
    resolved.set("chmc", "target_accept", repr(target_accept))
    for name, c in chmc.items():
        resolved.set("chmc", f"step_{name}", repr(c.step_size))
    resolved.set("endmembers", "library", lib_path)
    resolved.write(args.out)
    return 0


def _write_trace(trace: dict, R: int, K: int, path: str) -> None:
    scalar_keys = [k for k in trace if k != "dirichlet"]
    c_names = [f"c_{r + 1}_{k + 1}" for r in range(R) for k in range(K)]
    header = ",".join(scalar_keys + c_names)
    columns = [np.asarray(trace[k], dtype=float) for k in scalar_keys]
    matrix = np.column_stack(columns + [trace["dirichlet"]])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, matrix, fmt="%.17g", delimiter=",")


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args: argparse.Namespace) -> int:
    truth = load_results(args.truth)
    est = load_results(args.estimate)
    R = truth.abundances.shape[0]
    if est.abundances.shape[0] != R:
        raise ConfigError(
            f"endmember count mismatch: truth R={R}, "
            f"estimate R={est.abundances.shape[0]}"
        )
    if est.abundances.shape[1] != truth.abundances.shape[1]:
        raise ConfigError("pixel count mismatch between truth and estimate")
    K = truth.dirichlet.shape[1]

    perm = align_endmembers(truth.endmember_means, est.endmember_means)
    A_est = est.abundances[perm]
    M_est = est.endmember_means[:, perm]
    C_est = est.dirichlet[perm]

    em = endmember_errors(truth.endmember_means, M_est)
    a_rmse = armse_abundance(truth.abundances, A_est)
    y_true = truth.endmember_means @ truth.abundances
    y_est = M_est @ A_est
    re, sam_y = reconstruction_errors(y_true, y_est)

    accuracy = float("nan")
    dir_err = float("nan")
    if est.dirichlet.shape[1] == K:
        accuracy = classification_accuracy(truth.labels, est.labels, K)
        cperm = align_labels(truth.labels, est.labels, K)
        # map estimated class columns onto truth classes before comparing
        C_aligned = np.empty_like(C_est)
        for j in range(K):
            C_aligned[:, cperm[j]] = C_est[:, j]
        dir_err = float(np.max(np.abs(C_aligned - truth.dirichlet) / truth.dirichlet))

    names = ["aRMSE_A"]
    values = [a_rmse]
    for r in range(R):
        names.append(f"RMSE_m{r + 1}")
        values.append(float(em.rmse[r]))
    for r in range(R):
        names.append(f"SAM_m{r + 1}")
        values.append(float(em.sam[r]))
    names += ["aRMSE_M", "aSAM_M", "RE", "SAM_Y", "class_accuracy", "dirichlet_max_rel_err"]
    values += [em.armse, em.asam, re, sam_y, accuracy, dir_err]

    print(",".join(names))
    print(",".join("%.17g" % v for v in values))
    print()
    width = max(len(n) for n in names)
    for n, v in zip(names, values):
        print(f"{n:<{width}}  {v:12.6g}  (x1e-2: {100 * v:10.4f})")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gncmix",
        description="Unsupervised Bayesian hyperspectral unmixing with "
        "endmember variability and spatial classes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a synthetic scene")
    p_gen.add_argument("--config", required=True, help="INI scene description")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=cmd_generate)

    p_unmix = sub.add_parser("unmix", help="run the sampler on a cube")
    p_unmix.add_argument("cube", help="path to the observed cube")
    p_unmix.add_argument("--config", required=True, help="INI sampler configuration")
    p_unmix.add_argument("--out", required=True, help="output directory")
    p_unmix.add_argument("--cube-format", default="auto", choices=["auto", "csv", "raw-f64"])
    p_unmix.add_argument("--iters", type=int, default=None, help="total sweeps")
    p_unmix.add_argument("--burn-in", type=int, default=None, help="burn-in sweeps")
    p_unmix.add_argument("--seed", type=int, default=None)
    p_unmix.add_argument("--threads", type=int, default=1, help="worker bound (recorded; results never depend on it)")
    p_unmix.add_argument("--fix-noise-zero", action="store_true", help="pin noise variances at zero")
    p_unmix.add_argument("--k-classes", type=int, default=None)
    p_unmix.add_argument("--r-endmembers", type=int, default=None)
    p_unmix.add_argument("--beta", type=float, default=None)
    p_unmix.add_argument("--library", default=None, help="endmember library JSON for the mean prior")
    p_unmix.set_defaults(func=cmd_unmix)

    p_eval = sub.add_parser("evaluate", help="compare an estimate against ground truth")
    p_eval.add_argument("truth", help="directory holding the truth bundle")
    p_eval.add_argument("estimate", help="directory holding the estimated bundle")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, OSError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4
    except GncmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
