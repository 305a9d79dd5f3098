"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 file-format error,
4 numerical failure (diagnostic JSON on stderr).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .decompose import (
    DEFAULT_MAX_ITER,
    DEFAULT_RESTARTS,
    DEFAULT_TOL,
    TnDecomposition,
    TuckerDecomposition,
    hooi_semisym,
    hosvd_semisym,
    reconstruct,
    tn_pca,
)
from .inference import (
    EmbeddingMatrix,
    TraitVector,
    UndefinedDirectionError,
    cca_direction,
    extreme_groups,
    fdr_bh,
    lda_direction,
    mmd_test,
    principal_network,
    top_edges,
)
from .io import (
    FORMAT_VERSION,
    TensorFormatError,
    dump_json,
    load_adjacency_csv,
    load_json,
    numeric_columns,
    read_tensor,
    write_table,
    write_tensor,
)
from .predict import DEFAULT_FRACTIONS, DEFAULT_K_GRID, evaluate_trait_repeated, identify_subjects
from .simulate import (
    DEFAULT_SNR_GRID,
    METHODS,
    U_MODES,
    SimulationConfig,
    generate,
    generate_planted_trait,
    run_study,
)
from .tensor import frobenius_norm

log = logging.getLogger("tnpca")

EXIT_CONFIG, EXIT_FORMAT, EXIT_NUMERIC = 2, 3, 4
UNRECORDED = {"func", "config", "output_dir", "threads", "verbose"}


class ConfigError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def _positive_float(text):
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return x


def _float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _str_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in UNRECORDED}


def _envelope(args, command: str, body: dict) -> dict:
    return {"spec_version": FORMAT_VERSION, "tool_version": __version__, "command": command,
            "config": _resolved(args), **body}


def _out(args, name) -> Path:
    d = Path(args.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


# -- decomposition files -----------------------------------------------------


def decomposition_to_dict(dec) -> dict:
    if isinstance(dec, TuckerDecomposition):
        return {
            "kind": "tucker",
            "core": dec.core,
            "V": dec.V,
            "U": dec.U,
            "diagnostics": {"fit": dec.fit, "converged": dec.converged, "iterations": dec.iterations},
        }
    return {
        "kind": "cp",
        "d": dec.d,
        "V": dec.V,
        "U": dec.U,
        "diagnostics": {
            "objective_traces": dec.objective_traces,
            "converged": dec.converged,
            "degenerate": dec.degenerate,
        },
    }


def load_decomposition(path):
    doc = load_json(path)
    try:
        kind = doc["kind"]
        V = np.asarray(doc["V"], dtype=float)
        U = np.asarray(doc["U"], dtype=float)
        if kind == "tucker":
            diag = doc.get("diagnostics", {})
            return TuckerDecomposition(np.asarray(doc["core"], dtype=float), V, U, diag.get("fit", np.nan),
                                       diag.get("converged", True), diag.get("iterations", 0))
        if kind == "cp":
            diag = doc.get("diagnostics", {})
            d = np.asarray(doc["d"], dtype=float)
            V = V.reshape(-1, d.size)
            U = U.reshape(-1, d.size)
            return TnDecomposition(d, V, U, diag.get("objective_traces", []), diag.get("converged", []),
                                   diag.get("degenerate", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise TensorFormatError(f"{path}: malformed decomposition ({exc})") from exc
    raise TensorFormatError(f"{path}: unknown decomposition kind {doc.get('kind')!r}")


def _embedding(path) -> EmbeddingMatrix:
    dec = load_decomposition(path)
    if not isinstance(dec, TnDecomposition):
        raise ConfigError("embedding-based commands need a TN-PCA (cp) decomposition")
    return EmbeddingMatrix.from_decomposition(dec)


def _scores_from(args) -> tuple[list[str], np.ndarray]:
    if getattr(args, "decomposition", None):
        emb = _embedding(args.decomposition)
        return [str(i) for i in range(emb.N)], emb.scores
    if getattr(args, "scores", None):
        _, labels, S = numeric_columns(args.scores, skip=1)
        return labels, S
    raise ConfigError("give --decomposition or --scores")


def _traits(path):
    names, labels, T = numeric_columns(path, skip=1)
    return names, labels, T


def _trait_column(path, name):
    names, _, T = _traits(path)
    if name not in names:
        raise ConfigError(f"trait {name!r} not in {path} (columns: {', '.join(names)})")
    return T[:, names.index(name)]


# -- commands ----------------------------------------------------------------


def cmd_simulate(args):
    try:
        cfg = SimulationConfig(args.p, args.n, args.k, args.snr, args.u_mode, args.seed, 1)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(args.seed)
    body = {}
    if args.planted_edge:
        draw, traits, names = generate_planted_trait(
            cfg, rng, edge=tuple(args.planted_edge), trait_noise=args.trait_noise, n_null_traits=args.null_traits
        )
        tpath = _out(args, f"{args.prefix}_traits.csv")
        write_table(tpath, ["subject"] + names, [[i, *row] for i, row in enumerate(traits)])
        body["planted_edge"] = list(args.planted_edge)
        body["traits_file"] = tpath.name
    else:
        draw = generate(cfg, rng)
    write_tensor(_out(args, f"{args.prefix}.sstn"), draw.X)
    body.update({"D_true": draw.D_true, "V_true": draw.V_true, "U_true": draw.U_true,
                 "noise_scale": draw.noise_scale, "tensor_file": f"{args.prefix}.sstn"})
    dump_json(_out(args, f"{args.prefix}_truth.json"), _envelope(args, "simulate", body))
    return 0


def cmd_load_csv(args):
    X = load_adjacency_csv(args.paths)
    write_tensor(_out(args, args.output), X.values)
    print(json.dumps({"output": args.output, "dims": list(X.shape)}))
    return 0


def _decompose(method, X, k, k_u, args, rng):
    if method == "tnpca":
        return tn_pca(X, k, tol=args.tol, max_iter=args.max_iter, restarts=args.restarts, seed=rng)
    if method == "hosvd":
        return hosvd_semisym(X, k, k_u)
    return hooi_semisym(X, k, k_u, tol=args.tol, max_iter=args.max_iter)


def cmd_decompose(args):
    X = read_tensor(args.input)
    if X.ndim != 3:
        raise ConfigError("decompose expects an order-3 tensor")
    k_u = args.k_u or args.k
    if not 1 <= args.k <= X.shape[0] or not 1 <= k_u <= X.shape[2]:
        raise ConfigError(f"K={args.k} (K_U={k_u}) out of range for dims {X.shape}")
    dec = _decompose(args.method, X, args.k, k_u, args, np.random.default_rng(args.seed))
    body = {"method": args.method, **decomposition_to_dict(dec)}
    dump_json(_out(args, args.output), _envelope(args, "decompose", body))
    return 0


def cmd_reconstruct(args):
    X = read_tensor(args.input)
    dec = load_decomposition(args.decomposition)
    if dec.V.shape[0] != X.shape[0] or dec.U.shape[0] != X.shape[2]:
        raise ConfigError("decomposition does not match tensor dimensions")
    Xh = reconstruct(dec)
    res = frobenius_norm(X - Xh)
    nx = frobenius_norm(X)
    body = {"residual": res, "relative_residual": res / nx if nx else 0.0}
    dump_json(_out(args, args.output), _envelope(args, "reconstruct", body))
    print(json.dumps(body))
    return 0


def cmd_verify(args):
    dec = load_decomposition(args.decomposition)
    V, U = dec.V, dec.U
    checks = {"V_orthonormal": float(np.max(np.abs(V.T @ V - np.eye(V.shape[1])))) if V.size else 0.0}
    if isinstance(dec, TuckerDecomposition):
        checks["U_orthonormal"] = float(np.max(np.abs(U.T @ U - np.eye(U.shape[1]))))
    else:
        checks["U_unit_columns"] = float(np.max(np.abs(np.linalg.norm(U, axis=0) - 1))) if U.size else 0.0
        checks["d_positive"] = bool(np.all(dec.d > 0))
    ok = all((v <= args.tol) if isinstance(v, float) else v for v in checks.values())
    body = {"ok": ok, "checks": checks, "tolerance": args.tol}
    print(json.dumps(body, sort_keys=True))
    if not ok:
        raise NumericalFailure("decomposition failed verification", body)
    return 0


def cmd_embed(args):
    emb = _embedding(args.decomposition)
    header = ["subject"] + [f"pc{k + 1}" for k in range(emb.K)]
    write_table(_out(args, args.output), header, [[i, *row] for i, row in enumerate(emb.scores)])
    return 0


def _group_rows(path):
    _, _, rows = numeric_columns(path, skip=1)
    return rows


def cmd_test_groups(args):
    rng = np.random.default_rng(args.seed)
    if args.group_a or args.group_b:
        if not (args.group_a and args.group_b):
            raise ConfigError("--group-a and --group-b go together")
        res = mmd_test(_group_rows(args.group_a), _group_rows(args.group_b), args.permutations, rng)
        results = [{"trait": "groups", **res._asdict()}]
    else:
        if not args.traits:
            raise ConfigError("give --group-a/--group-b or --traits with --decomposition/--scores")
        _, S = _scores_from(args)
        if args.k:
            S = S[:, : args.k]
        names, _, T = _traits(args.traits)
        if T.shape[0] != S.shape[0]:
            raise ConfigError(f"traits have {T.shape[0]} rows, embedding has {S.shape[0]}")
        results = []
        for j, name in enumerate(names):
            low, high = extreme_groups(T[:, j], args.n_per_group, rng)
            res = mmd_test(S[low], S[high], args.permutations, rng)
            results.append({"trait": name, **res._asdict()})
    fdr = fdr_bh([r["p_value"] for r in results], args.alpha)
    for r, rej in zip(results, fdr.rejected):
        r["fdr_significant"] = bool(rej)
    write_table(
        _out(args, args.output + ".csv"),
        ["trait", "statistic", "p_value", "permutations", "bandwidth", "fdr_significant"],
        [[r[c] for c in ("trait", "statistic", "p_value", "permutations", "bandwidth", "fdr_significant")]
         for r in results],
    )
    body = {"alpha": args.alpha, "fdr_threshold": fdr.threshold, "results": results}
    dump_json(_out(args, args.output + ".json"), _envelope(args, "test-groups", body))
    return 0


def cmd_direction(args):
    emb = _embedding(args.decomposition)
    if args.k:
        emb = emb.truncate(args.k)
    y = _trait_column(args.traits, args.trait)
    if y.shape[0] != emb.N:
        raise ConfigError(f"trait has {y.shape[0]} rows, embedding has {emb.N}")
    rng = np.random.default_rng(args.seed)
    if args.kind == "categorical":
        levels = np.unique(y[~np.isnan(y)])
        if levels.size != 2:
            raise ConfigError(f"categorical trait needs two levels, found {levels.size}")
        low, high = np.flatnonzero(y == levels[0]), np.flatnonzero(y == levels[1])
    else:
        n = args.n_per_group or max(2, int(np.sum(~np.isnan(y))) // 4)
        low, high = extreme_groups(y, n, rng)
    covariates = None
    if args.covariates:
        _, _, covariates = numeric_columns(args.covariates, skip=1)
    if args.method == "cca":
        direction = cca_direction(emb, TraitVector(y, "continuous", args.trait), covariates, (low, high))
    else:
        direction = lda_direction(emb, low, high, regularize=not args.no_regularize, trait=args.trait)
    edges = top_edges(direction.delta_net, min(args.n_edges, emb.V.shape[0] * (emb.V.shape[0] - 1) // 2))
    stem = args.output
    write_table(_out(args, stem + "_edges.csv"), ["i", "j", "value"], edges)
    body = {**direction.to_dict(), "top_edges": edges, "group_sizes": [len(low), len(high)]}
    dump_json(_out(args, stem + ".json"), _envelope(args, "direction", body))
    if args.plot:
        from .plotting import plot_network

        plot_network(direction.delta_net, _out(args, stem + ".png"), edges, f"{args.trait} ({args.method})")
    return 0


def cmd_predict(args):
    labels, S = _scores_from(args)
    y = _trait_column(args.traits, args.trait)
    covariates = None
    if args.covariates:
        _, _, covariates = numeric_columns(args.covariates, skip=1)
    reports = evaluate_trait_repeated(S, y, args.kind, covariates, args.k_grid, args.repeats, args.seed, args.trait)
    rhos = [r.rho for r in reports]
    body = {
        "trait": args.trait,
        "kind": args.kind,
        "rho_mean": float(np.mean(rhos)),
        "rho_std": float(np.std(rhos)),
        "runs": [r.to_dict() for r in reports],
    }
    dump_json(_out(args, args.output), _envelope(args, "predict", body))
    return 0


def cmd_identify(args):
    _, glabels, G = numeric_columns(args.gallery, skip=1)
    _, plabels, Pr = numeric_columns(args.probes, skip=1)
    rep = identify_subjects(G, glabels, Pr, plabels, args.k)
    dump_json(_out(args, args.output), _envelope(args, "identify", rep.to_dict()))
    print(json.dumps({"accuracy": rep.accuracy, "K": rep.K}))
    return 0


def cmd_principal_network(args):
    dec = load_decomposition(args.decomposition)
    if not isinstance(dec, TnDecomposition):
        raise ConfigError("principal-network needs a TN-PCA (cp) decomposition")
    net = principal_network(dec, args.k)
    P = net.shape[0]
    edges = top_edges(net, min(args.n_edges, P * (P - 1) // 2))
    write_table(_out(args, args.output + "_edges.csv"), ["i", "j", "value"], edges)
    dump_json(_out(args, args.output + ".json"),
              _envelope(args, "principal-network", {"network": net, "top_edges": edges}))
    if args.plot:
        from .plotting import plot_network

        plot_network(net, _out(args, args.output + ".png"), edges, "principal network")
    return 0


def cmd_study(args):
    try:
        base = SimulationConfig(args.p, args.n, max(args.k_grid), args.snr_grid[0], U_MODES[0],
                                args.seed, args.replicates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bad = set(args.methods) - set(METHODS) or set(args.u_modes) - set(U_MODES)
    if bad:
        raise ConfigError(f"unknown method/u-mode: {sorted(bad)}")
    if any(s <= 0 for s in args.snr_grid):
        raise ConfigError("every SNR must be positive")
    report = run_study(args.snr_grid, args.k_grid, args.methods, args.u_modes, base, threads=args.threads)
    rows = list(report.rows())
    header = list(rows[0].keys()) if rows else ["method"]
    write_table(_out(args, args.output + ".csv"), header, [[r[h] for h in header] for r in rows])
    dump_json(_out(args, args.output + ".json"), _envelope(args, "study", report.to_dict()))
    if not args.no_plot:
        from .plotting import plot_study

        plot_study(report, args.output_dir)
    return 0


# -- parser --------------------------------------------------------------------


class _DefaultsFormatter(argparse.HelpFormatter):
    def _get_help_string(self, action):
        text = action.help or ""
        hidden = action.default is None or action.default is False or action.default == argparse.SUPPRESS
        if not hidden and "(default" not in text:
            text += " (default: %(default)s)"
        return text


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed")
    common.add_argument("--output-dir", default=".", help="directory for outputs")
    common.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    common.add_argument("--config", help="JSON file of flat key/value defaults for this command")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="tnpca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_, extra=()):
        p = sub.add_parser(name, parents=[common, *extra], help=help_, formatter_class=_DefaultsFormatter)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    opts = argparse.ArgumentParser(add_help=False)
    opts.add_argument("--tol", type=float, default=DEFAULT_TOL, help="relative convergence tolerance")
    opts.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="max sweeps per component")
    opts.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS, help="initializations per component")

    p = add("simulate", cmd_simulate, "draw a semi-symmetric tensor with Wishart noise")
    p.add_argument("--p", type=int, default=30, help="node count")
    p.add_argument("--n", type=int, default=100, help="subject count")
    p.add_argument("--k", type=int, default=5, help="true rank")
    p.add_argument("--snr", type=_positive_float, default=2.0, help="signal-to-noise ratio (> 0)")
    p.add_argument("--u-mode", choices=U_MODES, default="gaussian", help="subject factor distribution")
    p.add_argument("--planted-edge", type=int, nargs=2, metavar=("I", "J"),
                   help="localize component 0 on edge (I, J) and emit a trait driven by it")
    p.add_argument("--null-traits", type=int, default=4, help="extra pure-noise traits with --planted-edge")
    p.add_argument("--trait-noise", type=float, default=0.5, help="noise sd of the planted trait")
    p.add_argument("--prefix", default="sim", help="output file prefix")

    p = add("load-csv", cmd_load_csv, "stack per-subject adjacency CSVs into a tensor file")
    p.add_argument("paths", nargs="+", help="one P x P CSV per subject")
    p.add_argument("--output", default="tensor.sstn", help="tensor file to write")

    p = add("decompose", cmd_decompose, "TN-PCA, HOSVD or HOOI of a tensor file", [opts])
    p.add_argument("--input", required=True, help="tensor file (.sstn)")
    p.add_argument("--k", type=int, required=True, help="rank (network factors)")
    p.add_argument("--k-u", type=int, default=None, help="Tucker subject rank (default: --k)")
    p.add_argument("--method", choices=METHODS, default="tnpca", help="decomposition")
    p.add_argument("--output", default="decomposition.json", help="decomposition JSON")

    p = add("reconstruct", cmd_reconstruct, "residual of a decomposition against its tensor")
    p.add_argument("--input", required=True, help="tensor file (.sstn)")
    p.add_argument("--decomposition", required=True, help="decomposition JSON")
    p.add_argument("--output", default="reconstruct.json", help="residual report")

    p = add("verify", cmd_verify, "check factor constraints of a decomposition")
    p.add_argument("--decomposition", required=True, help="decomposition JSON")
    p.add_argument("--tol", type=float, default=1e-10, help="allowed deviation from orthonormality")

    p = add("embed", cmd_embed, "write subject PC scores as CSV")
    p.add_argument("--decomposition", required=True, help="decomposition JSON")
    p.add_argument("--output", default="scores.csv", help="score CSV")

    p = add("test-groups", cmd_test_groups, "MMD tests between low/high trait groups with BH-FDR")
    p.add_argument("--group-a", help="CSV of embedded rows (first column = label)")
    p.add_argument("--group-b", help="CSV of embedded rows (first column = label)")
    p.add_argument("--decomposition", help="decomposition JSON (scores = U)")
    p.add_argument("--scores", help="PC score CSV (first column = subject)")
    p.add_argument("--traits", help="trait CSV (first column = subject, one column per trait)")
    p.add_argument("--k", type=int, default=None, help="use only the first K PC scores")
    p.add_argument("--n-per-group", type=int, default=100, help="subjects in each extreme group")
    p.add_argument("--permutations", type=int, default=1000, help="MMD label permutations")
    p.add_argument("--alpha", type=float, default=0.05, help="BH-FDR level")
    p.add_argument("--output", default="tests", help="output stem (.csv and .json)")

    p = add("direction", cmd_direction, "CCA/LDA trait direction mapped back to edge space")
    p.add_argument("--decomposition", required=True, help="decomposition JSON")
    p.add_argument("--traits", required=True, help="trait CSV (first column = subject)")
    p.add_argument("--trait", required=True, help="trait column name")
    p.add_argument("--method", choices=("cca", "lda"), default="cca", help="direction estimator")
    p.add_argument("--kind", choices=("continuous", "ordinal", "categorical"), default="continuous", help="trait type")
    p.add_argument("--k", type=int, default=None, help="use only the first K components (default: all)")
    p.add_argument("--n-per-group", type=int, default=None, help="group size (default: a quarter of subjects)")
    p.add_argument("--covariates", help="CSV of covariates regressed out of the trait (cca)")
    p.add_argument("--no-regularize", action="store_true", help="plain (S0+S1)^-1 for LDA")
    p.add_argument("--n-edges", type=int, default=50, help="edges listed in the CSV")
    p.add_argument("--plot", action="store_true", help="also render the network as PNG")
    p.add_argument("--output", default="direction", help="output stem (.json, _edges.csv, .png)")

    p = add("predict", cmd_predict, "baseline vs full prediction and the improvement ratio")
    p.add_argument("--decomposition", help="decomposition JSON (scores = U)")
    p.add_argument("--scores", help="PC score CSV (first column = subject)")
    p.add_argument("--traits", required=True, help="trait CSV (first column = subject)")
    p.add_argument("--trait", required=True, help="trait column name")
    p.add_argument("--kind", choices=("continuous", "ordinal", "categorical"), default="continuous", help="trait type")
    p.add_argument("--covariates", help="CSV of covariates used by both models")
    p.add_argument("--k-grid", type=_int_list, default=list(DEFAULT_K_GRID), help="comma-separated PC counts")
    p.add_argument("--repeats", type=int, default=10, help="independent random splits")
    p.add_argument("--fractions", type=_float_list, default=list(DEFAULT_FRACTIONS), help="train,validation,test")
    p.add_argument("--output", default="predict.json", help="report JSON")

    p = add("identify", cmd_identify, "1-NN subject identification on PC scores")
    p.add_argument("--gallery", required=True, help="CSV: label, pc1..pcK")
    p.add_argument("--probes", required=True, help="CSV: label, pc1..pcK")
    p.add_argument("--k", type=int, default=10, help="PC scores used")
    p.add_argument("--output", default="identify.json", help="report JSON")

    p = add("principal-network", cmd_principal_network, "weighted sum of network modes and its top edges")
    p.add_argument("--decomposition", required=True, help="decomposition JSON")
    p.add_argument("--k", type=int, default=None, help="components summed (default: all)")
    p.add_argument("--n-edges", type=int, default=200, help="edges listed in the CSV")
    p.add_argument("--plot", action="store_true", help="also render the network as PNG")
    p.add_argument("--output", default="principal_network", help="output stem (.json, _edges.csv, .png)")

    p = add("study", cmd_study, "simulation study: core error and variance explained per method/SNR")
    p.add_argument("--p", type=int, default=30, help="node count")
    p.add_argument("--n", type=int, default=100, help="subject count")
    p.add_argument("--k-grid", type=_int_list, default=[5], help="comma-separated true ranks")
    p.add_argument("--snr-grid", type=_float_list, default=list(DEFAULT_SNR_GRID), help="comma-separated SNRs")
    p.add_argument("--methods", type=_str_list, default=list(METHODS), help="comma-separated methods")
    p.add_argument("--u-modes", type=_str_list, default=list(U_MODES), help="comma-separated subject factor modes")
    p.add_argument("--replicates", type=int, default=10, help="draws per cell")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figures")
    p.add_argument("--output", default="study", help="output stem (.csv and .json)")
    return parser, subs


def _apply_config(parser, subs, argv, args):
    path = args.config
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or any(isinstance(v, dict) for v in cfg.values()):
        raise ConfigError("config must be a flat JSON object")
    sp = subs[args.command]
    known = {a.dest for a in sp._actions} - {"help", "func", "config"}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    sp.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser, subs = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            args = _apply_config(parser, subs, argv, args)
        return args.func(args)
    except TensorFormatError as exc:
        print(f"tnpca: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NumericalFailure, UndefinedDirectionError, np.linalg.LinAlgError, ArithmeticError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc), **getattr(exc, "diagnostics", {})}
        print(json.dumps(diag, sort_keys=True, default=str), file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"tnpca: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"tnpca: I/O error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
