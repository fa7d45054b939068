"""Command-line surface: traversal visualization, invariance verification,
eigensolver validation, and the scaling benchmark.

Reports are UTF-8 key=value blocks with stable key order so they diff
cleanly; keys under ``metric.time_`` carry wall-clock measurements and are
the only nondeterministic lines. Exit codes: 0 pass, 1 check failure,
2 usage or I/O error, 3 numeric or convergence error.
"""

from __future__ import annotations

import argparse
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backends
from .eigen import (
    EigConfig,
    canonicalize_signs,
    dense_eig,
    lanczos_smallest,
    principal_angle_cosines,
)
from .errors import ConvergenceError, NumericError, SpectralScanError
from .fixtures import fixture_names, named_adjacency
from .flops import FlopCounter
from .graph import GraphConfig, SparseSymMatrix, flatten_features, normalized_laplacian
from .images import ImageTensor, read_ppm, rotate_grid, rotate_quarter, synth_uniform, write_ppm
from .patches import FeatureMap, rotation_normalized_features
from .pipeline import build_traversal
from .rng import Xorshift64Star
from .ssm import network_forward
from .weights import ModelConfig, parse_model_config, seeded_model_weights

_BENCH_TOKENS = (49, 196, 784, 3136)


class StageError(SpectralScanError):
    """Wraps a pipeline error with the stage it came from."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"stage {stage}: {original}")
        self.stage = stage
        self.original = original


@contextmanager
def _stage(name: str):
    try:
        yield
    except SpectralScanError as exc:
        raise StageError(name, exc) from exc


@dataclass
class RunReport:
    command: str
    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def render(self) -> str:
        def fmt(v):
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = [f"command={self.command}"]
        for k, v in self.config.items():
            lines.append(f"config.{k}={fmt(v)}")
        for k, v in self.metrics.items():
            lines.append(f"metric.{k}={fmt(v)}")
        for w in self.warnings:
            lines.append(f"warning={w}")
        for k, ok in self.checks.items():
            lines.append(f"check.{k}={'pass' if ok else 'fail'}")
        lines.append(f"status={'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def _load_config(args) -> ModelConfig:
    if getattr(args, "config", None):
        cfg = parse_model_config(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = ModelConfig()
    overrides = {}
    if getattr(args, "m", None) is not None:
        overrides["m"] = args.m
    if getattr(args, "k", None) is not None:
        overrides["k"] = args.k
    if getattr(args, "merge", None) is not None:
        overrides["merge_mode"] = args.merge
    if getattr(args, "zoh", None) is not None:
        overrides["zoh_mode"] = args.zoh
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def _config_echo(cfg: ModelConfig, seed: int) -> dict:
    return {
        "p": cfg.p,
        "in_channels": cfg.in_channels,
        "C": cfg.channels,
        "N": cfg.state_dim,
        "m": cfg.m,
        "k": cfg.k,
        "layout": ",".join(str(b) for b in cfg.layout),
        "merge_mode": cfg.merge_mode,
        "zoh_mode": cfg.zoh_mode,
        "rfn_turns": ",".join(str(q) for q in cfg.rfn_turns),
        "seed": seed,
        "backend": backends.BACKEND,
    }


def _read_image(path: str) -> ImageTensor:
    with _stage("image-read"):
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise SpectralScanError(f"cannot read {path}: {exc}") from exc
        return read_ppm(data)


def _rank_map_image(plan, t: int) -> ImageTensor:
    hp, wp = plan.source_shape
    n = plan.n
    ranks = plan.inverses[t].reshape(hp, wp).astype(np.float64)
    scale = ranks / max(n - 1, 1)
    grey = np.repeat(scale[:, :, None], 3, axis=2).astype(np.float32)
    return ImageTensor(height=hp, width=wp, channels=3, data=grey)


def _stem_features(img, cfg: ModelConfig, seed: int, counter, parallel) -> FeatureMap:
    weights = seeded_model_weights(cfg, seed)
    with _stage("stem"):
        return rotation_normalized_features(
            img, weights.stem, cfg.rfn_turns, counter, parallel
        )


def cmd_traverse(args) -> tuple[RunReport, int]:
    cfg = _load_config(args)
    img = _read_image(args.image)
    counter = FlopCounter()
    fm = _stem_features(img, cfg, args.seed, counter, args.parallel)
    with _stage("traversal-build"):
        build = build_traversal(fm, GraphConfig(k=cfg.k), EigConfig(m=cfg.m), counter)

    report = RunReport(command="traverse", config=_config_echo(cfg, args.seed))
    report.metrics["tokens"] = build.plan.n
    report.metrics["sigma"] = build.sigma
    for j, lam in enumerate(build.basis.eigenvalues):
        report.metrics[f"lambda{j}"] = float(lam)
    report.metrics["adjacency_nnz"] = build.adjacency.nnz
    report.metrics["laplacian_nnz"] = build.laplacian.nnz
    for stage in ("adjacency", "laplacian", "eigensolve", "plan"):
        report.metrics[f"flops_{stage}"] = build.counter.get(stage)
    report.metrics["eig_iterations"] = build.eig_report.iterations
    report.metrics["eig_mode"] = build.eig_report.mode
    report.metrics["time_build_seconds"] = build.seconds

    prefix = args.out or "traverse"
    with _stage("output-write"):
        for t in range(2 * build.plan.m):
            direction = "asc" if t % 2 == 0 else "desc"
            path = Path(f"{prefix}_order{t:02d}_{direction}_ev{t // 2}.ppm")
            path.write_bytes(write_ppm(_rank_map_image(build.plan, t)))
        Path(f"{prefix}_plan.txt").write_text(build.plan.dump(), encoding="utf-8")
        Path(f"{prefix}_report.txt").write_text(report.render(), encoding="utf-8")
    return report, 0


def _seeded_permutation(n: int, rng: Xorshift64Star) -> np.ndarray:
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def _content_sequences(fm: FeatureMap, plan) -> np.ndarray:
    return fm.tokens[plan.orders]


def cmd_check_invariance(args) -> tuple[RunReport, int]:
    cfg = _load_config(args)
    img = _read_image(args.image)
    if img.height != img.width:
        raise SpectralScanError(
            f"check-invariance needs a square image, got {img.height}x{img.width}"
        )
    counter = FlopCounter()
    weights = seeded_model_weights(cfg, args.seed)
    report = RunReport(command="check-invariance", config=_config_echo(cfg, args.seed))

    with _stage("stem"):
        fm = rotation_normalized_features(
            img, weights.stem, cfg.rfn_turns, counter, args.parallel
        )
    with _stage("traversal-build"):
        base = build_traversal(fm, GraphConfig(k=cfg.k), EigConfig(m=cfg.m), counter)

    gaps = np.diff(base.basis.eigenvalues)
    degenerate = bool(gaps.size and gaps.min() < 1e-9)
    if degenerate:
        report.warnings.append(
            "degenerate_spectrum: content-order checks demoted to subspace level"
        )

    # (a) feature equivariance under quarter turns
    rfn_ok = True
    rotated_fms = {}
    for q in (1, 2, 3):
        with _stage("stem"):
            fm_q = rotation_normalized_features(
                rotate_quarter(img, q), weights.stem, cfg.rfn_turns,
                counter, args.parallel,
            )
        rotated_fms[q] = fm_q
        if not np.array_equal(fm_q.data, rotate_grid(fm.data, q)):
            rfn_ok = False
    report.checks["rfn_equivariance"] = rfn_ok

    # (b) traversal content order under quarter turns
    base_content = _content_sequences(fm, base.plan)
    order_ok = True
    subspace_ok = True
    for q in (1, 2, 3):
        with _stage("traversal-build"):
            build_q = build_traversal(
                rotated_fms[q], GraphConfig(k=cfg.k), EigConfig(m=cfg.m), counter
            )
        if degenerate:
            cosines = principal_angle_cosines(base.basis.vectors, build_q.basis.vectors)
            if np.any(np.arccos(np.clip(cosines, -1.0, 1.0)) > 1e-6):
                subspace_ok = False
        else:
            content_q = _content_sequences(rotated_fms[q], build_q.plan)
            if not np.array_equal(content_q, base_content):
                order_ok = False
    if degenerate:
        report.checks["rotation_subspace"] = subspace_ok
    else:
        report.checks["rotation_content_order"] = order_ok

    # (c) end-to-end score agreement
    if not degenerate:
        with _stage("network"):
            base_scores = network_forward(img, weights, cfg, counter, args.parallel)
        score_ok = True
        worst = 0.0
        for q in (1, 2, 3):
            with _stage("network"):
                scores_q = network_forward(
                    rotate_quarter(img, q), weights, cfg, counter, args.parallel
                )
            gap = float(np.abs(scores_q - base_scores).max())
            worst = max(worst, gap)
            if gap > 1e-6:
                score_ok = False
        report.metrics["score_gap_max"] = worst
        report.checks["network_scores"] = score_ok

    # (d) node relabeling invariance
    rng = Xorshift64Star(args.seed ^ 0x9E3779B9)
    perm_ok = True
    spectrum_ok = True
    tokens = fm.tokens
    for _ in range(32):
        perm = _seeded_permutation(base.plan.n, rng)
        permuted = FeatureMap(
            hp=fm.hp, wp=fm.wp, channels=fm.channels,
            data=np.ascontiguousarray(tokens[perm].reshape(fm.data.shape)),
        )
        with _stage("traversal-build"):
            build_p = build_traversal(
                permuted, GraphConfig(k=cfg.k), EigConfig(m=cfg.m), counter
            )
        if np.abs(build_p.basis.eigenvalues - base.basis.eigenvalues).max() > 1e-10:
            spectrum_ok = False
        if degenerate:
            cos = principal_angle_cosines(
                base.basis.vectors[perm], build_p.basis.vectors
            )
            if np.any(np.arccos(np.clip(cos, -1.0, 1.0)) > 1e-6):
                perm_ok = False
        else:
            content_p = _content_sequences(permuted, build_p.plan)
            if not np.array_equal(content_p, base_content):
                perm_ok = False
    key = "permutation_subspace" if degenerate else "permutation_content_order"
    report.checks[key] = perm_ok
    report.checks["permutation_spectrum"] = spectrum_ok

    if args.out:
        Path(f"{args.out}_report.txt").write_text(report.render(), encoding="utf-8")
    return report, 0 if report.passed else 1


def cmd_eig(args) -> tuple[RunReport, int]:
    if args.fixture:
        with _stage("fixture"):
            w = named_adjacency(args.fixture)
        source = args.fixture
    else:
        with _stage("matrix-read"):
            try:
                text = Path(args.matrix).read_text(encoding="utf-8")
            except OSError as exc:
                raise SpectralScanError(f"cannot read {args.matrix}: {exc}") from exc
            w = SparseSymMatrix.from_triplets(text)
        source = args.matrix
    m = args.m if args.m is not None else 4
    with _stage("laplacian"):
        lap = normalized_laplacian(w)
    counter = FlopCounter()
    report = RunReport(command="eig", config={
        "source": source, "n": lap.n, "m": m, "backend": backends.BACKEND,
    })
    with _stage("eigensolve"):
        cfg = EigConfig(m=m)
        basis, eig_report = lanczos_smallest(lap, cfg, counter)
    with _stage("dense-oracle"):
        dvals, dvecs = dense_eig(lap.to_dense(), counter)
        doracle = canonicalize_signs(
            type(basis)(n=lap.n, m=m, eigenvalues=dvals[:m].copy(),
                        vectors=np.ascontiguousarray(dvecs[:, :m])),
            cfg.eps_sign,
        )

    gaps = np.abs(basis.eigenvalues - doracle.eigenvalues)
    for j in range(m):
        report.metrics[f"lambda{j}"] = float(basis.eigenvalues[j])
        report.metrics[f"gap{j}"] = float(gaps[j])
        report.metrics[f"residual{j}"] = float(eig_report.residuals[j])
    report.metrics["orthogonality_error"] = eig_report.orthogonality_error
    report.metrics["iterations"] = eig_report.iterations
    report.metrics["mode"] = eig_report.mode
    report.metrics["flops_eigensolve"] = counter.get("eigensolve")

    near_zero = int(np.sum(basis.eigenvalues < 1e-10))
    report.metrics["near_zero_eigenvalues"] = near_zero
    if near_zero >= 2:
        report.warnings.append(
            f"multiplicity: {near_zero} eigenvalues below 1e-10 "
            "(disconnected components)"
        )

    report.checks["eigenvalue_gaps"] = bool(np.all(gaps <= 1e-8))
    report.checks["residuals"] = bool(np.all(eig_report.residuals <= cfg.tol))
    report.checks["orthogonality"] = eig_report.orthogonality_error <= 1e-8
    report.checks["spectrum_range"] = bool(
        np.all(basis.eigenvalues >= -1e-10)
        and np.all(basis.eigenvalues <= 2.0 + 1e-10)
    )
    if args.out:
        Path(f"{args.out}_report.txt").write_text(report.render(), encoding="utf-8")
    return report, 0 if report.passed else 1


def cmd_bench(args) -> tuple[RunReport, int]:
    cfg = _load_config(args)
    report = RunReport(command="bench", config=_config_echo(cfg, args.seed))
    weights = seeded_model_weights(cfg, args.seed)
    sparse_bytes = []
    nnz_ok = True
    for tokens in _BENCH_TOKENS:
        side = int(round(tokens ** 0.5))
        img = synth_uniform(side * cfg.p, side * cfg.p, cfg.in_channels,
                            args.seed + tokens)
        counter = FlopCounter()
        with _stage("stem"):
            fm = rotation_normalized_features(
                img, weights.stem, cfg.rfn_turns, counter, args.parallel
            )
        with _stage("traversal-build"):
            start = time.perf_counter()
            build = build_traversal(
                fm, GraphConfig(k=cfg.k), EigConfig(m=cfg.m), counter
            )
            elapsed = time.perf_counter() - start
        total_bytes = build.adjacency.byte_size() + build.laplacian.byte_size()
        sparse_bytes.append(total_bytes)
        prefix = f"n{tokens}"
        report.metrics[f"{prefix}_adjacency_nnz"] = build.adjacency.nnz
        report.metrics[f"{prefix}_sparse_bytes"] = total_bytes
        for stage in ("adjacency", "laplacian", "eigensolve", "plan"):
            report.metrics[f"{prefix}_flops_{stage}"] = counter.get(stage)
        report.metrics[f"{prefix}_flops_total"] = sum(
            counter.get(s) for s in ("adjacency", "laplacian", "eigensolve", "plan")
        )
        report.metrics[f"{prefix}_time_sts_seconds"] = elapsed
        if build.adjacency.nnz > 2 * cfg.k * tokens:
            nnz_ok = False

    ratios_ok = True
    for prev, cur in zip(sparse_bytes, sparse_bytes[1:]):
        ratio = cur / prev
        if not 3.0 <= ratio <= 5.0:
            ratios_ok = False
    report.metrics["memory_ratio_bounds"] = "3.0..5.0"
    report.checks["sparse_nnz_bound"] = nnz_ok
    report.checks["memory_growth_linear"] = ratios_ok
    if args.out:
        Path(f"{args.out}_report.txt").write_text(report.render(), encoding="utf-8")
    return report, 0 if report.passed else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectralscan",
        description="Spectrum-ordered patch traversal tools",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, image=False):
        p.add_argument("--config", help="model config file (key=value lines)")
        if image:
            p.add_argument("--image", required=True, help="binary P6 PPM input")
        p.add_argument("--out", help="output path prefix")
        p.add_argument("--m", type=int, help="eigenvector count override")
        p.add_argument("--k", type=int, help="neighbor count override")
        p.add_argument("--seed", type=int, default=1, help="weight/fixture seed")
        p.add_argument("--parallel", action="store_true",
                       help="run independent branches on threads")
        p.add_argument("--merge", choices=["concat_proj", "sum"],
                       help="merge mode override")
        p.add_argument("--zoh", choices=["approx", "exact"],
                       help="discretization mode override")

    common(sub.add_parser("traverse", help="emit rank maps and a plan dump"),
           image=True)
    common(sub.add_parser("check-invariance",
                          help="verify rotation/permutation invariance"),
           image=True)
    pe = sub.add_parser("eig", help="validate the sparse eigensolver")
    pe.add_argument("--matrix", help="adjacency triplet file (i j value lines)")
    pe.add_argument("--fixture", choices=fixture_names(),
                    help="named fixture graph")
    pe.add_argument("--m", type=int, default=4)
    pe.add_argument("--out", help="output path prefix")
    common(sub.add_parser("bench", help="token-count scaling sweep"))
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "traverse": cmd_traverse,
        "check-invariance": cmd_check_invariance,
        "eig": cmd_eig,
        "bench": cmd_bench,
    }
    if args.cmd == "eig" and bool(args.matrix) == bool(args.fixture):
        print("error: eig needs exactly one of --matrix or --fixture",
              file=sys.stderr)
        return 2
    try:
        report, code = handlers[args.cmd](args)
    except (ConvergenceError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except StageError as exc:
        if isinstance(exc.original, (ConvergenceError, NumericError)):
            print(f"error: {exc}", file=sys.stderr)
            return 3
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpectralScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.render())
    return code


if __name__ == "__main__":
    sys.exit(main())
