"""Command-line front door: dataset generation, training, guided inference,
evaluation, and the oracle suite.

Subcommands: render-dataset, train, infer, eval, oracle. Common flags:
--config PATH, --seed N, --deterministic, --out DIR. The environment
variable AXISFORGE_THREADS caps the BLAS worker count; --deterministic
forces single-threaded numerics. Exit codes: 0 success, 1 usage error,
2 runtime failure, 3 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

ANALYTIC_FIELD_VAR = 1e-4

USAGE_EXIT = 1
RUNTIME_EXIT = 2
ORACLE_EXIT = 3


def _configure_threads(deterministic: bool) -> None:
    """Apply the thread cap before numpy (and its BLAS) is first imported."""
    cap = "1" if deterministic else os.environ.get("AXISFORGE_THREADS")
    if cap is None:
        return
    for var in _THREAD_ENV_VARS:
        os.environ.setdefault(var, cap)


class _Parser(argparse.ArgumentParser):
    """argparse with the documented usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="axisforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="force single-threaded numerics",
        )

    p = sub.add_parser("render-dataset", help="render a seeded synthetic dataset")
    common(p)
    p.add_argument("--n-train", type=int, default=20)
    p.add_argument("--n-test", type=int, default=10)
    p.add_argument("--out", type=Path, required=True, help="dataset directory")

    p = sub.add_parser("train", help="train the conditional denoiser")
    common(p)
    p.add_argument("--dataset", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("infer", help="generate tri-axis images and solve poses")
    common(p)
    p.add_argument("--dataset", type=Path, required=True, help="dataset directory")
    p.add_argument("--checkpoint", type=Path, help="trained denoiser checkpoint")
    p.add_argument(
        "--analytic-denoiser",
        action="store_true",
        help="use the Gaussian score field built from each ground-truth tri-axis",
    )
    p.add_argument("--split", default="test", help="dataset split to run on")
    p.add_argument(
        "--guidance",
        dest="guidance",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="enable geometric-consistency guidance",
    )
    p.add_argument(
        "--clean-query",
        action="store_true",
        help="condition on the clean query instead of the degraded one",
    )
    p.add_argument("--out", type=Path, required=True, help="predictions directory")

    p = sub.add_parser("eval", help="score predictions against the dataset")
    common(p)
    p.add_argument("--dataset", type=Path, required=True, help="dataset directory")
    p.add_argument("--predictions", type=Path, required=True, help="predictions directory")
    p.add_argument("--split", default="test")
    p.add_argument(
        "--compare",
        type=Path,
        help="second predictions directory for a paired-delta summary",
    )
    p.add_argument("--out", type=Path, help="directory for report files")

    p = sub.add_parser("oracle", help="run the property-oracle suite")
    common(p)
    p.add_argument("--only", nargs="*", help="subset of oracle names")
    return parser


def _load_config(args):
    from .dataset import RunConfig, load_config

    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _require_resolution(cfg, manifest) -> None:
    size = cfg.arch.image_size
    k = manifest.intrinsics
    if (k.width, k.height) != (size, size):
        raise SystemExit(
            f"architecture expects {size}x{size} images but the dataset is "
            f"{k.width}x{k.height}"
        )


def cmd_render_dataset(args) -> int:
    from .dataset import generate_dataset, save_config

    cfg = _load_config(args)
    manifest = generate_dataset(cfg, args.n_train, args.n_test, args.out)
    save_config(args.out / "config.json", cfg)
    print(f"wrote {len(manifest.records)} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    import numpy as np

    from .dataset import load_manifest
    from .denoiser import load_checkpoint, save_checkpoint, train_denoiser
    from .render import load_f32

    cfg = _load_config(args)
    manifest = load_manifest(args.dataset)
    _require_resolution(cfg, manifest)
    size = cfg.arch.image_size
    records = manifest.split("train")
    if not records:
        raise SystemExit("dataset has no train split")
    dataset = [
        (
            load_f32(args.dataset / r.triaxis_path, (size, size, 3)),
            load_f32(args.dataset / r.query_path, (size, size)),
        )
        for r in records
    ]
    sched = cfg.schedule()
    start = load_checkpoint(args.resume) if args.resume else None
    rng = np.random.default_rng(cfg.seed)
    result = train_denoiser(dataset, cfg.arch, cfg.opt, sched, rng, start_from=start)

    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out / "checkpoint.bin", result.denoiser)
    with open(args.out / "train_log.jsonl", "w") as f:
        for rec in result.log:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    print(
        f"trained {cfg.opt.steps} steps: loss {result.initial_loss:.4g} -> "
        f"{result.final_loss:.4g}; checkpoint at {args.out / 'checkpoint.bin'}"
    )
    return 0


def cmd_infer(args) -> int:
    import numpy as np

    from .dataset import load_manifest, record_seed
    from .denoiser import load_checkpoint
    from .diffusion import (
        GaussianScoreField,
        GuidanceConfig,
        gaussian_denoiser,
        sample,
    )
    from .errors import AxisForgeError
    from .extraction import extract_axes_hard
    from .render import TriAxisImage, load_f32, save_f32
    from .solver import recover_pose

    if bool(args.checkpoint) == bool(args.analytic_denoiser):
        raise SystemExit("pass exactly one of --checkpoint / --analytic-denoiser")
    cfg = _load_config(args)
    manifest = load_manifest(args.dataset)
    records = manifest.split(args.split)
    if not records:
        raise SystemExit(f"dataset has no '{args.split}' split")
    K = manifest.intrinsics
    size = K.width
    sched = cfg.schedule()
    den = None
    if args.checkpoint:
        den = load_checkpoint(args.checkpoint)
        _require_resolution(cfg, manifest)

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "images").mkdir(exist_ok=True)
    n_fail = 0
    with open(args.out / "predictions.jsonl", "w") as out:
        for rec in records:
            gt_triaxis = load_f32(args.dataset / rec.triaxis_path, (size, size, 3))
            cond_path = rec.query_path if args.clean_query else rec.degraded_path
            cond = load_f32(args.dataset / cond_path, (size, size))
            rng = np.random.default_rng(record_seed(cfg.seed, rec.id))
            line = {"id": rec.id}
            try:
                target = extract_axes_hard(TriAxisImage(gt_triaxis))
                guidance = None
                if args.guidance:
                    guidance = GuidanceConfig(
                        target=target,
                        rho=cfg.guidance.rho_base,
                        sharpness=cfg.guidance.sharpness,
                        mode=cfg.guidance.mode,
                    )
                record_den = den
                if args.analytic_denoiser:
                    field = GaussianScoreField(
                        mean=gt_triaxis, var=np.full(gt_triaxis.shape, ANALYTIC_FIELD_VAR)
                    )
                    record_den = gaussian_denoiser(field, sched)
                result = sample(
                    record_den,
                    cond,
                    guidance,
                    sched,
                    sigma=cfg.sigma,
                    steps=cfg.sample_steps,
                    rng=rng,
                    shape=(size, size),
                )
                save_f32(args.out / "images" / f"{rec.id}_gen.f32", result.image.data)
                obs = extract_axes_hard(result.image)
                pose = recover_pose(obs, K, scale_lambda_O=rec.scale_lambda_O)
                line.update(
                    {
                        "ok": True,
                        "R": [float(v) for v in pose.R.ravel()],
                        "T": [float(v) for v in pose.T],
                        "skipped_guidance_steps": result.skipped_steps,
                    }
                )
            except AxisForgeError as exc:
                n_fail += 1
                line.update({"ok": False, "error": type(exc).__name__, "message": str(exc)})
            out.write(json.dumps(line, sort_keys=True) + "\n")
    print(f"inferred {len(records)} records ({n_fail} failed) into {args.out}")
    return 0


def _load_predictions(pred_dir: Path) -> dict[str, dict]:
    path = pred_dir / "predictions.jsonl"
    if not path.is_file():
        raise SystemExit(f"missing {path}")
    preds = {}
    with open(path) as f:
        for raw in f:
            raw = raw.strip()
            if raw:
                rec = json.loads(raw)
                preds[rec["id"]] = rec
    return preds


def _report_for(manifest, records, preds):
    import numpy as np

    from .camera import Pose
    from .metrics import MetricThresholds, cuboid_model, evaluate_suite

    model = cuboid_model()
    pairs, ids = [], []
    n_failed = 0
    missing = []
    for rec in records:
        pred = preds.get(rec.id)
        if pred is None:
            missing.append(rec.id)
            n_failed += 1
            continue
        if not pred["ok"]:
            n_failed += 1
            continue
        pose = Pose(
            R=np.asarray(pred["R"], dtype=float).reshape(3, 3),
            T=np.asarray(pred["T"], dtype=float),
        )
        pairs.append((rec.pose, pose))
        ids.append(rec.id)
    report = evaluate_suite(
        pairs, model, manifest.intrinsics, MetricThresholds(), ids=ids, n_failed=n_failed
    )
    return report, missing


def cmd_eval(args) -> int:
    from .dataset import load_manifest

    manifest = load_manifest(args.dataset)
    records = manifest.split(args.split)
    if not records:
        raise SystemExit(f"dataset has no '{args.split}' split")
    report, missing = _report_for(manifest, records, _load_predictions(args.predictions))
    for rid in missing:
        print(f"MissingPrediction: {rid}")
    agg = report.aggregates()
    print(report.summary_csv(), end="")

    delta = None
    if args.compare:
        other, _ = _report_for(manifest, records, _load_predictions(args.compare))
        delta = {
            k: agg[k] - other.aggregates()[k]
            for k in ("add_rate", "reproj_rate", "median_rot_deg", "median_reproj_px")
        }
        print("paired delta (predictions - compare):")
        print(json.dumps(delta, sort_keys=True))

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "records.jsonl", "w") as f:
            for rec in report.records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        doc = {"aggregates": agg, "missing": missing}
        if delta is not None:
            doc["paired_delta"] = delta
        with open(args.out / "report.json", "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
        with open(args.out / "summary.csv", "w") as f:
            f.write(report.summary_csv())
    return 0


def cmd_oracle(args) -> int:
    from .oracle import run_all

    t0 = time.perf_counter()
    results = run_all(args.only or None)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failures += not r.passed
        print(f"{status} {r.name}: tolerance [{r.tolerance}] measured [{r.measured}] ({r.seconds:.2f}s)")
    print(f"{len(results) - failures}/{len(results)} oracles passed in {time.perf_counter() - t0:.1f}s")
    return ORACLE_EXIT if failures else 0


_COMMANDS = {
    "render-dataset": cmd_render_dataset,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_threads(args.deterministic)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return RUNTIME_EXIT
        raise
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        from .errors import AxisForgeError

        if isinstance(exc, (AxisForgeError, OSError, ValueError)):
            print(f"error: {exc}", file=sys.stderr)
            return RUNTIME_EXIT
        raise


if __name__ == "__main__":
    sys.exit(main())
