"""Command-line front end: ``bamsr {train,eval,infer,bench,count,gradcheck}``.

Every subcommand accepts ``--config FILE`` plus ``--<key> VALUE`` overrides
for any config key. Exit status: 0 success, 1 failed check or runtime
failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import ConfigError, RunConfig

logger = logging.getLogger("bamsr")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("train", "eval", "infer", "bench", "count", "gradcheck")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _writable(cfg: RunConfig, key: str) -> Path:
    value = getattr(cfg, key)
    if not value:
        raise ConfigError(f"'{key}' is required", key)
    p = Path(value)
    if p.exists() and p.is_dir():
        raise ConfigError(f"'{key}': {value} is a directory", key)
    return p


def cmd_train(cfg: RunConfig) -> int:
    from .checkpoint import CheckpointError, load_checkpoint
    from .data import five_crop_expand, ingest
    from .network import build
    from .train import TrainingError, train, write_trace_csv

    train_dir = cfg.require_path("train_dir")
    lr_dir = cfg.require_path("lr_dir") if cfg.lr_dir else None
    ckpt_path, csv_path = _writable(cfg, "checkpoint"), _writable(cfg, "loss_csv")
    spec = cfg.train_spec()
    optimizer = rng = None
    start = 0
    if cfg.resume:
        cfg.require_path("resume", "file")
        try:
            net, state = load_checkpoint(cfg.resume)
        except CheckpointError as exc:
            raise ConfigError(f"'resume': {exc}", "resume") from None
        if net.spec != cfg.network_spec():
            raise ConfigError("'resume': checkpoint network differs from the configured one", "resume")
        optimizer, rng, start = state.optimizer, state.rng, state.epoch
    else:
        net = build(cfg.network_spec(), cfg.seed)
    try:
        dataset = ingest(train_dir, cfg.scale, min_size=cfg.patch_size * cfg.scale, lr_dir=lr_dir)
        if cfg.five_crop:
            dataset = five_crop_expand(dataset, cfg.crop_fraction, cfg.patch_size)
    except ValueError as exc:
        raise ConfigError(f"'train_dir': {exc}", "train_dir") from None

    attn = net.num_parameters() - build(cfg.network_spec("none"), cfg.seed).num_parameters()
    print(f"params {net.num_parameters()} (attention {attn})")
    print(f"pairs {len(dataset)}, {spec.steps_per_epoch(len(dataset))} steps per epoch")
    for p in (ckpt_path, csv_path):
        p.parent.mkdir(parents=True, exist_ok=True)

    def on_epoch(rec):
        print(f"epoch {rec.epoch} lr {rec.lr:.6g} loss {rec.mean_l1:.6f}", flush=True)

    try:
        res = train(net, dataset, spec, optimizer=optimizer, rng=rng, start_epoch=start,
                    checkpoint_path=ckpt_path, checkpoint_every=cfg.checkpoint_every or spec.epochs,
                    on_epoch=on_epoch)
    except (TrainingError, FloatingPointError) as exc:
        logger.error("training failed: %s", exc)
        return EXIT_FAIL
    write_trace_csv(csv_path, res.trace, append=bool(cfg.resume))
    if not res.trace or res.epoch == start:
        from .checkpoint import save_checkpoint

        save_checkpoint(ckpt_path, net, res.optimizer, res.epoch, res.rng, spec)
    print(f"wrote {ckpt_path} and {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval and infer
# ---------------------------------------------------------------------------


def _load_for_inference(cfg: RunConfig):
    from .checkpoint import CheckpointError, load_checkpoint

    cfg.require_path("checkpoint", "file")
    try:
        net, _ = load_checkpoint(cfg.checkpoint, dtype=np.float64)
    except CheckpointError as exc:
        raise ConfigError(f"'checkpoint': {exc}", "checkpoint") from None
    if "scale" in cfg.provided and cfg.scale != net.spec.scale:
        raise ConfigError(
            f"'scale': requested x{cfg.scale} but the checkpoint is x{net.spec.scale}", "scale")
    return net


def upscale(net, lr: np.ndarray) -> np.ndarray:
    """Float64 forward of one (3, h, w) image, clamped to [0, 1]."""
    from .autograd import Tensor, no_grad

    with no_grad():
        out = net(Tensor(lr[None].astype(np.float64))).data[0]
    return np.clip(out, 0.0, 1.0)


def evaluate_pair(net, pair):
    """``(bicubic, network)`` Y-channel reports for one pair, both outputs
    quantised to 8 bits and shaved by the scale."""
    from .metrics import bicubic_resize, evaluate_rgb, quantize

    s = net.spec.scale
    h, w = pair.hr.shape[-2:]
    bic = quantize(bicubic_resize(pair.lr, h, w)) / 255.0
    sr = quantize(upscale(net, pair.lr)) / 255.0
    return evaluate_rgb(pair.hr, bic, s), evaluate_rgb(pair.hr, sr, s)


EVAL_HEADER = ["image", "method", "psnr", "ssim", "PSNR/SSIM"]


def _eval_rows(name, method, rep):
    return [name, method, f"{rep.psnr_db:.6f}", f"{rep.ssim:.6f}", rep.formatted()]


def _mean_rows(rows_by_method):
    from .metrics import MetricReport

    out = []
    for method, reps in rows_by_method.items():
        mean = MetricReport(float(np.mean([r.psnr_db for r in reps])),
                            float(np.mean([r.ssim for r in reps])), reps[0].border_shave)
        out.append(_eval_rows("mean", method, mean))
    return out


def cmd_eval(cfg: RunConfig) -> int:
    from .data import load_png, make_pair
    from .metrics import evaluate_rgb

    out_csv = _writable(cfg, "eval_csv")
    rows, by_method = [], {}
    if cfg.reference_dir or cfg.test_dir:
        ref_dir, test_dir = cfg.require_path("reference_dir"), cfg.require_path("test_dir")
        names = sorted(p.name for p in ref_dir.glob("*.png"))
        if not names:
            raise ConfigError(f"'reference_dir': no PNG images in {ref_dir}", "reference_dir")
        missing = [n for n in names if not (test_dir / n).is_file()]
        if missing:
            raise ConfigError(f"'test_dir': missing {', '.join(missing)}", "test_dir")
        for n in names:
            ref, test = load_png(ref_dir / n), load_png(test_dir / n)
            if ref.shape != test.shape:
                logger.error("%s: shape %s vs %s", n, ref.shape, test.shape)
                return EXIT_FAIL
            rep = evaluate_rgb(ref, test, cfg.scale)
            by_method.setdefault("test", []).append(rep)
            rows.append(_eval_rows(n, "test", rep))
    else:
        hr_dir = cfg.require_path("hr_dir")
        net = _load_for_inference(cfg)
        s = net.spec.scale
        method = net.spec.attention.kind.value if net.spec.has_attention else "none"
        paths = sorted(hr_dir.glob("*.png"))
        if not paths:
            raise ConfigError(f"'hr_dir': no PNG images in {hr_dir}", "hr_dir")
        for p in paths:
            bic, sr = evaluate_pair(net, make_pair(load_png(p), s, p.name))
            for m, rep in (("bicubic", bic), (method, sr)):
                by_method.setdefault(m, []).append(rep)
                rows.append(_eval_rows(p.name, m, rep))
    rows += _mean_rows(by_method)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_HEADER)
        writer.writerows(rows)
    for r in rows:
        print(f"{r[0]:<24} {r[1]:<8} {r[4]}")
    return EXIT_OK


def cmd_infer(cfg: RunConfig) -> int:
    from .data import load_png, save_png

    src = cfg.require_path("input", "file")
    dst = _writable(cfg, "output")
    net = _load_for_inference(cfg)
    try:
        lr = load_png(src)
    except Exception as exc:  # noqa: BLE001 - any decode failure
        logger.error("cannot read %s: %s", src, exc)
        return EXIT_FAIL
    out = upscale(net, lr)
    dst.parent.mkdir(parents=True, exist_ok=True)
    save_png(dst, out)
    print(f"wrote {dst} ({out.shape[1]}x{out.shape[2]})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench, count, gradcheck
# ---------------------------------------------------------------------------


def cmd_bench(cfg: RunConfig) -> int:
    from .bench import HEADER, MIN_FRAMES, MIN_WARMUP, run_bench

    if cfg.frames < MIN_FRAMES:
        raise ConfigError(f"'frames' must be at least {MIN_FRAMES}", "frames")
    if cfg.warmup < MIN_WARMUP:
        raise ConfigError(f"'warmup' must be at least {MIN_WARMUP}", "warmup")
    variants = cfg.variant_list()
    if not variants:
        raise ConfigError("'variants' is empty", "variants")
    reports = run_bench(cfg.network_spec(), variants, cfg.size_list(), cfg.frames, cfg.warmup, cfg.seed)
    writer = csv.writer(sys.stdout)
    writer.writerow(HEADER)
    for r in reports:
        writer.writerow(r.row())
    return EXIT_OK


COUNT_HEADER = ["kind", "attention_params", "attention_flops", "network_params", "network_flops", "size"]


def cmd_count(cfg: RunConfig) -> int:
    from .attention import AttentionKind, count_flops, count_params
    from .network import build, network_flops

    h, w = cfg.count_size()
    writer = csv.writer(sys.stdout)
    writer.writerow(COUNT_HEADER)
    for kind in AttentionKind:
        spec = cfg.network_spec(kind)
        attn = spec.attention
        net = build(spec, cfg.seed)
        writer.writerow([kind.value, count_params(attn), count_flops(attn, h, w),
                         net.num_parameters(), network_flops(spec, h, w), f"{h}x{w}"])
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, fault: Optional[str] = None) -> int:
    from contextlib import nullcontext

    from .autograd import inject_gradient_fault
    from .gradcheck import GRADCHECK_TOLERANCE, standard_targets

    failed = []
    ctx = inject_gradient_fault(fault) if fault else nullcontext()
    with ctx:
        for name, run in standard_targets(cfg.seed):
            err = run()
            ok = err <= GRADCHECK_TOLERANCE
            print(f"{name:<20} {err:.3e} {'ok' if ok else 'FAIL'}", flush=True)
            if not ok:
                failed.append(name)
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}")
        return EXIT_FAIL
    print(f"all targets within {GRADCHECK_TOLERANCE:g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bamsr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in RunConfig.keys():
            p.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VALUE")
        if name == "gradcheck":
            p.add_argument("--inject-fault", metavar="OP", help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    try:
        cfg = RunConfig.from_sources(args.config, overrides)
        handler = globals()[f"cmd_{args.command}"]
        if args.command == "gradcheck":
            return handler(cfg, args.inject_fault)
        return handler(cfg)
    except ConfigError as exc:
        print(f"bamsr {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
