"""Command-line driver: degrade | train | enhance | evaluate | verify-sde.

Exit codes: 0 success, 1 validation error, 2 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from scoredec import verify
from scoredec.audio_io import WavError, read_wav, write_wav
from scoredec.config import ConfigError, RunConfig, load_config
from scoredec.degrade import degrade_pipeline
from scoredec.metrics import evaluate_pair, format_report
from scoredec.pipeline import enhance, new_model, oracle_for, training_pairs
from scoredec.score_model import TrainingDivergedError, load_checkpoint, save_checkpoint, train

log = logging.getLogger("scoredec")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class ValidationError(Exception):
    pass


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_manifest(path: Path, required=("clean_path", "degraded_path")) -> list[dict]:
    if not path.is_file():
        raise ValidationError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"manifest {path} has no rows")
    missing_cols = [c for c in required if c not in rows[0]]
    if missing_cols:
        raise ValidationError(f"manifest {path} lacks columns: {', '.join(missing_cols)}")
    return rows


def _check_files(paths) -> None:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise ValidationError("missing files:\n  " + "\n  ".join(missing))


def _read_all(paths, jobs: int):
    def load(p):
        try:
            return read_wav(p)
        except WavError as exc:
            raise ValidationError(str(exc)) from exc
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(load, paths))


def _pmap(fn, items, jobs: int):
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------


def cmd_degrade(args, cfg: RunConfig) -> int:
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        raise ValidationError(f"input directory not found: {in_dir}")
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() == ".wav")
    if not files:
        raise ValidationError(f"no WAV files in {in_dir}")
    clean = _read_all(files, args.jobs)
    for f, w in zip(files, clean):
        try:
            cfg.degrade.check_rate(w.sample_rate_hz)
        except ValueError as exc:
            raise ValidationError(f"{f}: {exc}") from exc
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Path(args.manifest) if args.manifest else out_dir / "manifest.csv"

    def work(i):
        out = out_dir / files[i].name
        write_wav(degrade_pipeline(clean[i], cfg.degrade, i), out)
        return str(files[i].resolve()), str(out.resolve())

    rows = _pmap(work, range(len(files)), args.jobs)
    atomic_write_text(manifest, _csv_text(("clean_path", "degraded_path"), rows))
    log.info("degraded %d files into %s", len(rows), out_dir)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    rows = _read_manifest(Path(args.manifest))
    _check_files([r["clean_path"] for r in rows] + [r["degraded_path"] for r in rows])
    ckpt = Path(args.checkpoint)
    loss_csv = Path(args.loss_csv) if args.loss_csv else ckpt.with_name(ckpt.name + ".loss.csv")
    clean = _read_all([r["clean_path"] for r in rows], args.jobs)
    degraded = _read_all([r["degraded_path"] for r in rows], args.jobs)
    pairs = training_pairs(clean, degraded, cfg.stft, cfg.companding)
    model = new_model(cfg.stft, cfg.sde, **dataclasses.asdict(cfg.model))
    log.info("training %d-parameter model on %d pairs", model.n_params, len(pairs))
    trained, history = train(model, pairs, cfg.sde, cfg.train,
                             progress=lambda e, l: log.info("epoch %d  loss %.6g", e + 1, l))
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    extra = {"stft": dataclasses.asdict(cfg.stft), "companding": dataclasses.asdict(cfg.companding)}
    fd, tmp = tempfile.mkstemp(dir=ckpt.parent, prefix=f".{ckpt.name}.", suffix=".tmp")
    os.close(fd)
    try:
        save_checkpoint(trained, tmp, extra)
        os.replace(tmp, ckpt)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    atomic_write_text(loss_csv, _csv_text(("epoch", "mean_loss"), [(i + 1, repr(l)) for i, l in enumerate(history)]))
    return EXIT_OK


def _load_model(path, cfg: RunConfig):
    try:
        model, extra = load_checkpoint(path)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot load checkpoint {path}: {exc}") from exc
    want = {"stft": dataclasses.asdict(cfg.stft), "companding": dataclasses.asdict(cfg.companding)}
    for key, value in want.items():
        if key in extra and extra[key] != value:
            raise ValidationError(f"checkpoint {key} geometry {extra[key]} does not match config {value}")
    if model.config.n_bins != cfg.stft.n_bins:
        raise ValidationError(f"checkpoint expects {model.config.n_bins} bins, config STFT gives {cfg.stft.n_bins}")
    model.sde = cfg.sde
    return model


def cmd_enhance(args, cfg: RunConfig) -> int:
    src = Path(args.input)
    if not args.checkpoint and not args.oracle:
        raise ValidationError("enhance needs --checkpoint (or --oracle for the Gaussian-oracle test mode)")
    if src.suffix.lower() == ".csv":
        rows = _read_manifest(src, ("degraded_path",) + (("clean_path",) if args.oracle else ()))
        jobs = [(Path(r["degraded_path"]), Path(r["clean_path"]) if "clean_path" in r else None) for r in rows]
        out_dir = Path(args.output)
    else:
        if args.oracle and not args.oracle_clean:
            raise ValidationError("--oracle on a single file needs --oracle-clean PATH")
        jobs = [(src, Path(args.oracle_clean) if args.oracle_clean else None)]
        out_dir = None
    _check_files([d for d, _ in jobs] + ([c for _, c in jobs if c is not None] if args.oracle else []))
    model = None if args.oracle else _load_model(args.checkpoint, cfg)
    degraded = _read_all([d for d, _ in jobs], args.jobs)
    clean = _read_all([c for _, c in jobs], args.jobs) if args.oracle else [None] * len(jobs)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def work(i):
        d = degraded[i]
        m = oracle_for(clean[i], d, cfg.sde, cfg.stft, cfg.companding, args.oracle_prior_var) if args.oracle else model
        # independent stream per utterance
        sampler = dataclasses.replace(cfg.sampler, seed=cfg.sampler.seed ^ i)
        est = enhance(d, m, cfg.sde, cfg.stft, cfg.companding, sampler)
        dest = out_dir / jobs[i][0].name if out_dir is not None else Path(args.output)
        write_wav(est, dest)
        return dest

    outputs = _pmap(work, range(len(jobs)), args.jobs)
    if out_dir is not None:
        table = [(r.get("clean_path", ""), r["degraded_path"], str(o.resolve())) for r, o in zip(rows, outputs)]
        atomic_write_text(out_dir / "manifest.csv", _csv_text(("clean_path", "degraded_path", "estimate_path"), table))
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    rows = _read_manifest(Path(args.manifest), ("clean_path",))
    est_col = "estimate_path" if "estimate_path" in rows[0] else "degraded_path"
    if est_col not in rows[0]:
        raise ValidationError("manifest needs an estimate_path or degraded_path column")
    _check_files([r["clean_path"] for r in rows] + [r[est_col] for r in rows])
    refs = _read_all([r["clean_path"] for r in rows], args.jobs)
    ests = _read_all([r[est_col] for r in rows], args.jobs)
    ids = [r.get("utt_id") or Path(r["clean_path"]).stem for r in rows]
    report = _pmap(lambda i: evaluate_pair(refs[i], ests[i], cfg.stft, ids[i]), range(len(rows)), args.jobs)
    atomic_write_text(Path(args.out_csv), format_report(report))
    return EXIT_OK


def cmd_verify_sde(args, cfg: RunConfig) -> int:
    checks = verify.run_all(cfg.sde, cfg.sampler, reference=not args.no_reference)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_RUNTIME


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--jobs", type=int, default=1, help="utterances processed concurrently")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="scoredec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", parents=[common], help="build a paired clean/degraded corpus")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--manifest", help="manifest path (default OUT_DIR/manifest.csv)")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", parents=[common], help="train the score network on a manifest")
    p.add_argument("manifest")
    p.add_argument("checkpoint")
    p.add_argument("--loss-csv", help="loss curve path (default CHECKPOINT.loss.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", parents=[common], help="post-filter a WAV file or a manifest of them")
    p.add_argument("input", help="degraded WAV, or a manifest CSV with degraded_path")
    p.add_argument("output", help="output WAV, or output directory for a manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--oracle", action="store_true", help="use the Gaussian oracle score built from the clean signal")
    p.add_argument("--oracle-clean", help="clean reference for --oracle on a single file")
    p.add_argument("--oracle-prior-var", type=float, default=1e-3)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", parents=[common], help="objective metrics report")
    p.add_argument("manifest")
    p.add_argument("out_csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify-sde", parents=[common], help="Monte-Carlo checks of the diffusion closed forms")
    p.add_argument("--no-reference", action="store_true",
                   help="skip the comparison against reference values for the default parameters")
    p.set_defaults(func=cmd_verify_sde)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        return args.func(args, cfg)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingDivergedError, FloatingPointError, WavError, OSError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
