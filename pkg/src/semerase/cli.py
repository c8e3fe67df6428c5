"""Batch front door: five subcommands composing the erasure pipeline.

    build-subspace   annotated embeddings -> subspace bundle
    suppress         bundle + condition   -> suppressed condition + MSE report
    optimize         bundle + conditions  -> refined condition + step trace
    perturb          embeddings           -> appended-row stability report
    verify           (nothing)            -> built-in property suite

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O or
format error, 4 numerical error.  Progress goes to stderr; artifacts go
to the paths given by flags (the verify table, which IS the artifact,
goes to stdout).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import concept, formats, optim, perturb, suppress
from .errors import (
    DimensionMismatch,
    EmptySelection,
    RankOutOfBounds,
    SchemaViolation,
    ToolkitError,
    UsageError,
)

_ROLE_FROM_KIND = {"sot": "sot", "eot": "eot", "word": "word", "target": "word", "other": "word"}


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_selection(text: str) -> frozenset[str]:
    kinds = frozenset(part.strip() for part in text.split(",") if part.strip())
    if not kinds:
        raise UsageError("--select needs at least one kind")
    unknown = kinds - formats.SIDECAR_KINDS
    if unknown:
        raise UsageError(f"--select: unknown kinds {sorted(unknown)}; known: {sorted(formats.SIDECAR_KINDS)}")
    return kinds


def _roles_for(meta: formats.EmbeddingMetadata | None, n_rows: int) -> tuple[str, ...]:
    """Per-row condition roles from sidecar kinds, or the positional default.

    Without a sidecar, row 0 is taken as start-of-text and the last row
    as end-of-text (the usual fixed-length encoder layout).
    """
    if meta is not None and meta.tokens:
        roles = ["word"] * n_rows
        for t in meta.tokens:
            roles[t.row] = _ROLE_FROM_KIND[t.kind]
        return tuple(roles)
    if n_rows == 1:
        return ("word",)
    return ("sot",) + ("word",) * (n_rows - 2) + ("eot",)


def cmd_build_subspace(args) -> int:
    if args.k < 1:
        raise RankOutOfBounds(f"--k must be >= 1, got {args.k}")
    selection = _parse_selection(args.select)
    matrix, meta = formats.read_embeddings(args.embeddings)
    if meta is None or not meta.tokens:
        raise SchemaViolation(
            f"{args.embeddings}: no {formats.sidecar_path(args.embeddings).name} sidecar with token kinds; "
            "concept rows cannot be selected"
        )
    chosen = [t for t in meta.tokens if t.kind in selection]
    if not chosen:
        raise EmptySelection(f"no sidecar rows with kind in {sorted(selection)}")
    records = [
        concept.TokenRecord(
            embedding=matrix[t.row],
            sentence_id=t.sentence_id,
            position=t.position,
            text=t.text,
            kind="other" if t.kind == "word" else t.kind,
        )
        for t in chosen
    ]
    m = concept.assemble_concept_matrix(records, selection=concept.TOKEN_KINDS)
    s = concept.build_semantic_subspace(m, args.k, center=args.center)
    formats.write_subspace(s, args.out)
    _progress(f"N={s.n_rows} d_c={s.d_c} k={s.k}")
    _progress("sigma: " + " ".join(f"{x:.6g}" for x in s.sigma))
    _progress(f"wrote {args.out}")
    return 0


def cmd_suppress(args) -> int:
    s = formats.read_subspace(args.subspace)
    matrix, meta = formats.read_embeddings(args.condition)
    roles = _roles_for(meta, matrix.shape[0])
    cond = suppress.ConditionTokens(tokens=matrix, roles=roles)
    cfg = suppress.SuppressionConfig(k=s.k, skip_sot=args.skip_sot)
    result = suppress.suppress_condition(cond, s, cfg)
    formats.write_embeddings(result.tokens, meta, args.out)
    report = [
        {"row": i, "kind": roles[i], "mse": float(result.per_token_delta[i])}
        for i in range(len(roles))
    ]
    Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    _progress(f"suppressed {matrix.shape[0]} tokens (skip_sot={args.skip_sot}); wrote {args.out} and {args.report}")
    return 0


def cmd_optimize(args) -> int:
    s = formats.read_subspace(args.subspace)
    orig_matrix, orig_meta = formats.read_embeddings(args.original)
    sup_matrix, _ = formats.read_embeddings(args.suppressed)
    if orig_matrix.shape != sup_matrix.shape:
        raise DimensionMismatch(
            f"original {orig_matrix.shape} and suppressed {sup_matrix.shape} shapes differ"
        )
    roles = _roles_for(orig_meta, orig_matrix.shape[0])
    original = suppress.ConditionTokens(tokens=orig_matrix, roles=roles)
    suppressed = suppress.SuppressedCondition(
        tokens=sup_matrix,
        per_token_delta=np.mean((orig_matrix - sup_matrix) ** 2, axis=1),
        config_used=suppress.SuppressionConfig(k=s.k),
    )
    cfg = optim.OptimizationConfig(
        t_start=args.t_start,
        t_end=args.t_end,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        updates_per_step=args.updates_per_step,
    )
    den = optim.ToyDenoiser(
        n_tokens=orig_matrix.shape[0],
        d_c=orig_matrix.shape[1],
        seed=args.seed,
        t_max=max(50, args.t_end),
    )
    try:
        cfg.validate(t_max=den.t_max)
    except ValueError as e:
        raise UsageError(str(e)) from e
    x_init = np.random.default_rng(args.seed).standard_normal(den.state_dim)
    final, trace = optim.run_optimization(original, suppressed, s, den, cfg, x_init)
    formats.write_embeddings(final, orig_meta, args.out)
    Path(args.trace).write_text(json.dumps(trace.to_json_dict(), indent=2) + "\n")
    last = trace.steps[-1]
    _progress(
        f"optimized over t=[{cfg.t_start},{cfg.t_end}) with {cfg.optimizer}: "
        f"loss {trace.steps[0].loss_before:.6g} -> {last.loss_after:.6g}, "
        f"max drift {max(r.max_subspace_drift for r in trace.steps):.3e}"
    )
    _progress(f"wrote {args.out} and {args.trace}")
    return 0


def cmd_perturb(args) -> int:
    if args.k < 1:
        raise RankOutOfBounds(f"--k must be >= 1, got {args.k}")
    matrix, _ = formats.read_embeddings(args.embeddings)
    if args.trials is None:
        if matrix.shape[0] < 2:
            raise DimensionMismatch("need at least 2 rows to treat the last one as appended")
        report = perturb.verify_bound(matrix[:-1], matrix[-1], args.k)
        payload = report.to_json_dict()
        _progress(
            f"last row as perturbation: bound {payload['bound']}, "
            f"mean angle {report.mean_angle_deg:.6g} deg"
        )
    else:
        if args.trials < 1:
            raise UsageError(f"--trials must be >= 1, got {args.trials}")
        reports = perturb.trial_suite(matrix, args.k, trials=args.trials, seed=args.seed)
        all_angles = [a for r in reports for a in r.angles_deg]
        payload = {
            "trials": args.trials,
            "seed": args.seed,
            "mean_angle_deg": float(np.mean([r.mean_angle_deg for r in reports])),
            "max_angle_deg": float(np.max(all_angles)),
            "reports": [r.to_json_dict() for r in reports],
        }
        _progress(
            f"{args.trials} unit-row trials + zero control: mean angle "
            f"{payload['mean_angle_deg']:.6g} deg, max {payload['max_angle_deg']:.6g} deg"
        )
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    _progress(f"wrote {args.out}")
    return 0


def cmd_verify(args) -> int:
    from . import selfcheck

    results = selfcheck.run_all(fault=args.inject_fault, seed=args.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.ok]
    total = sum(r.seconds for r in results)
    if failed:
        print(f"{len(results) - len(failed)}/{len(results)} properties hold ({total:.1f}s); FAILED: {', '.join(failed)}")
        return 1
    print(f"{len(results)}/{len(results)} properties hold ({total:.1f}s)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semerase",
        description="Concept-erasure numerics: subspace extraction, token suppression, "
        "orthogonal refinement, perturbation analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-subspace", help="extract the rank-k concept subspace from annotated embeddings")
    p.add_argument("--embeddings", required=True, help="SSE-EMB file with a token-kind sidecar")
    p.add_argument("--k", type=int, default=5, help="subspace rank (default 5)")
    p.add_argument("--select", default="target,eot", help="comma-separated sidecar kinds to stack (default target,eot)")
    p.add_argument("--center", action="store_true", help="subtract the column mean before factorizing")
    p.add_argument("--out", required=True, help="output SSE-SUB bundle")
    p.set_defaults(func=cmd_build_subspace)

    p = sub.add_parser("suppress", help="suppress concept components in every condition token")
    p.add_argument("--subspace", required=True, help="SSE-SUB bundle")
    p.add_argument("--condition", required=True, help="SSE-EMB condition tokens")
    p.add_argument("--skip-sot", action="store_true", help="copy start-of-text rows through unchanged")
    p.add_argument("--out", required=True, help="output SSE-EMB with suppressed tokens")
    p.add_argument("--report", required=True, help="output JSON per-row MSE report")
    p.set_defaults(func=cmd_suppress)

    p = sub.add_parser("optimize", help="refine suppressed tokens with subspace-orthogonal gradient steps")
    p.add_argument("--subspace", required=True, help="SSE-SUB bundle")
    p.add_argument("--original", required=True, help="SSE-EMB original condition")
    p.add_argument("--suppressed", required=True, help="SSE-EMB suppressed condition")
    p.add_argument("--denoiser", choices=("toy",), default="toy", help="denoiser oracle (only the toy ships)")
    p.add_argument("--seed", type=int, default=42, help="seed for the denoiser and initial state (default 42)")
    p.add_argument("--t-start", type=int, default=30, help="first sampling step (default 30)")
    p.add_argument("--t-end", type=int, default=50, help="end of the sampling window (default 50)")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate (default 1e-3)")
    p.add_argument("--optimizer", choices=optim.OPTIMIZERS, default="plain_gd", help="update rule (default plain_gd)")
    p.add_argument("--updates-per-step", type=int, default=1, help="gradient updates per sampling step (default 1)")
    p.add_argument("--out", required=True, help="output SSE-EMB with refined tokens")
    p.add_argument("--trace", required=True, help="output JSON step trace")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("perturb", help="bound and measure subspace rotation under an appended row")
    p.add_argument("--embeddings", required=True, help="SSE-EMB token matrix")
    p.add_argument("--k", type=int, default=5, help="subspace rank (default 5)")
    p.add_argument("--trials", type=int, default=None, help="run N random unit-row trials plus a zero-row control")
    p.add_argument("--seed", type=int, default=42, help="seed for trial rows (default 42)")
    p.add_argument("--out", required=True, help="output JSON report")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("verify", help="run the built-in property suite")
    p.add_argument("--seed", type=int, default=42, help="seed for randomized checks (default 42)")
    p.add_argument(
        "--inject-fault",
        choices=("broken-projector",),
        default=None,
        help="deliberately break one check to exercise the failure path",
    )
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
