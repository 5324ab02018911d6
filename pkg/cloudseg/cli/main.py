"""CLI entry for cloudseg with subcommands.

Subcommands:
  train        Train one model on one seeded split and write a checkpoint
  infer        Predict one image with a checkpoint (prob.png, ternary.png, mask16.png)
  eval         Evaluate a checkpoint (or the ground-truth oracle) on a dataset
  experiment   Repeated random-split protocol with report.csv / report.md
  render       Re-render a saved 16-bit probability mask
  synth        Write a synthetic sky/cloud dataset with its manifest
  config       View or update configuration
"""
from __future__ import annotations
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from cloudseg import __version__
from cloudseg.core.checkpoint import load_checkpoint, save_checkpoint
from cloudseg.core.dataset import (
    Sample, load_dataset, random_split, read_image, resize_image, select, write_dataset,
)
from cloudseg.core.errors import CloudSegException, DivergenceError, exit_code_for
from cloudseg.core.experiment import RunManifest, evaluate_checkpoint, run_experiment
from cloudseg.core.metrics import LabelErrors, Thresholds, ternarize
from cloudseg.core.output_writer import write_report
from cloudseg.core.progress import spinner
from cloudseg.core.render import load_mask16, render_prob, render_ternary, save_mask16, save_rgb
from cloudseg.core.synth import synth_fixture
from cloudseg.core.trainer import TrainConfig, Trainer
from cloudseg.core.unet import UNetConfig, predict
from cloudseg.utils.config import config
from cloudseg.utils.constants import LOG_LEVELS, SUPPORTED_REPORT_FORMATS
from cloudseg.utils.logging_setup import configure_logging
from cloudseg.utils.profiler import profiler
from cloudseg.utils.validation import (
    ValidationError, validate_input_file, validate_output_dir, validate_output_path, validate_positive,
)

logger = logging.getLogger(__name__)

SYNTH_DATA_SEED = 0


# --- Helpers shared across subcommands ---

def _setting(value, key: str):
    """CLI flag if given, else the configured value."""
    return value if value is not None else config.get(key)


def _resolution(args: argparse.Namespace) -> int:
    return int(_setting(getattr(args, 'resolution', None), 'resolution'))


def _thresholds(args: argparse.Namespace) -> Thresholds:
    return Thresholds(float(_setting(args.t1, 'threshold_low')), float(_setting(args.t2, 'threshold_high')))


def _train_config(args: argparse.Namespace, seed: int) -> TrainConfig:
    validate_positive('epochs', args.epochs)
    validate_positive('batch', args.batch)
    validate_positive('lr', args.lr)
    return TrainConfig(
        epochs=int(_setting(args.epochs, 'epochs')),
        batch_size=int(_setting(args.batch, 'batch_size')),
        learning_rate=float(_setting(args.lr, 'learning_rate')),
        seed=seed,
    )


def _net_config(args: argparse.Namespace, seed: int) -> UNetConfig:
    validate_positive('depth', args.depth)
    validate_positive('base-channels', args.base_channels)
    return UNetConfig(
        depth=int(_setting(args.depth, 'depth')),
        base_channels=int(_setting(args.base_channels, 'base_channels')),
        seed=seed,
        resolution=_resolution(args),
    )


def _load_samples(args: argparse.Namespace, size: Optional[int] = None) -> List[Sample]:
    size = size or _resolution(args)
    if (args.manifest is None) == (args.synthetic is None):
        raise ValidationError("give exactly one of --manifest or --synthetic N")
    with spinner("Loading dataset", enabled=not args.no_progress):
        if args.synthetic is not None:
            validate_positive('synthetic', args.synthetic)
            return synth_fixture(args.synthetic, seed=SYNTH_DATA_SEED, size=size)
        validate_input_file(args.manifest)
        return load_dataset(args.manifest, size=size, codes=config.label_codes(), workers=args.workers)


def _format_errors(errors: LabelErrors) -> str:
    return "  ".join(f"{name}={'n/a' if v is None else f'{v:.2f}%'}"
                     for name, v in zip(("sky", "thin", "thick"), errors.as_tuple()))


# --- Subcommand handlers ---

def cmd_train(args: argparse.Namespace) -> int:
    validate_output_path(args.out)
    if args.resume:
        validate_input_file(args.resume)
        ckpt = load_checkpoint(args.resume)
        train_config = ckpt.train_config
        if args.epochs is not None:
            train_config = TrainConfig(**{**train_config.to_dict(), 'epochs': args.epochs})
        trainer = Trainer.from_checkpoint(ckpt, train_config)
        logger.info("Resuming from %s at epoch %d", args.resume, ckpt.epoch)
    else:
        trainer = Trainer(_train_config(args, args.seed), _net_config(args, args.seed))
    samples = _load_samples(args, trainer.net_config.resolution)
    split = random_split([s.id for s in samples], seed=trainer.config.seed)
    train_set = select(samples, split.train_ids)
    logger.info("Training on %d samples (%d held out), seed %d", len(train_set), len(split.test_ids),
                trainer.config.seed)
    log_every = int(config.get('log_every', 10))
    with spinner("Training", enabled=not args.no_progress) as sp:
        history = trainer.fit(train_set, log_every=log_every,
                              on_epoch=lambda e, loss: sp.set_status(f"epoch {e} loss {loss:.5f}"))
    save_checkpoint(trainer.checkpoint(), args.out)
    print(f"final train loss: {history[-1]:.6f}" if history else "no epochs run")
    print(f"checkpoint: {args.out}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    validate_input_file(args.checkpoint)
    validate_input_file(args.image)
    validate_output_dir(args.out)
    ckpt = load_checkpoint(args.checkpoint)
    image = read_image(args.image)
    size = ckpt.net_config.resolution
    [mask] = predict(ckpt.to_params(), [resize_image(image.rgb, size)], batch_size=1)
    out = Path(args.out)
    save_rgb(render_prob(mask), str(out / "prob.png"))
    save_rgb(render_ternary(ternarize(mask, _thresholds(args))), str(out / "ternary.png"))
    save_mask16(mask, str(out / "mask16.png"))
    print(f"wrote prob.png, ternary.png, mask16.png ({size}x{size}) to {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    th = _thresholds(args)
    params = None
    size = None
    if not args.oracle:
        if not args.checkpoint:
            raise ValidationError("eval needs --checkpoint unless --oracle is given")
        validate_input_file(args.checkpoint)
        ckpt = load_checkpoint(args.checkpoint)
        params = ckpt.to_params()
        size = ckpt.net_config.resolution
    samples = _load_samples(args, size)
    if args.split_seed is not None:
        split = random_split([s.id for s in samples], seed=args.split_seed)
        samples = select(samples, split.test_ids)
        logger.info("Evaluating the test split of seed %d (%d samples)", args.split_seed, len(samples))
    pooled, per_image = evaluate_checkpoint(params, samples, th, oracle=args.oracle,
                                            batch_size=int(config.get('batch_size', 4)))
    print(f"pooled:    {_format_errors(pooled)}")
    if args.verbose_report:
        print(f"per-image: {_format_errors(per_image)}")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    validate_output_dir(args.out)
    validate_positive('runs', args.runs)
    validate_positive('workers', args.workers)
    manifest = RunManifest(
        manifest_path=args.manifest,
        synthetic=args.synthetic,
        out_dir=args.out,
        seed=args.seed,
        runs=args.runs,
        train=_train_config(args, args.seed),
        net=_net_config(args, args.seed),
        thresholds=_thresholds(args),
        oracle=args.oracle,
        workers=args.workers,
    )
    manifest.validate()
    samples = _load_samples(args)
    with spinner(f"Running {manifest.runs} runs", enabled=not args.no_progress):
        report = run_experiment(samples, manifest)
    write_report(report, args.out, extra_formats=args.extra_format or [], verbose=args.verbose_report)
    print(f"mean over {len(report.runs)} runs: {_format_errors(report.mean)}")
    print(f"report: {Path(args.out) / 'report.csv'}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    validate_input_file(args.input, extensions=['.png'])
    validate_output_dir(args.out)
    mask = load_mask16(args.input)
    out = Path(args.out)
    save_rgb(render_prob(mask), str(out / "prob.png"))
    save_rgb(render_ternary(ternarize(mask, _thresholds(args))), str(out / "ternary.png"))
    print(f"wrote prob.png, ternary.png to {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    validate_positive('count', args.count)
    validate_output_dir(args.out)
    samples = synth_fixture(args.count, seed=args.seed, size=_resolution(args))
    manifest = write_dataset(samples, args.out, config.label_codes())
    print(f"manifest: {manifest}")
    return 0


def cmd_config(args: argparse.Namespace) -> int:
    """Handle configuration commands."""
    if args.list:
        for key, value in config.settings.items():
            print(f"{key} = {value}")
    elif args.get:
        print(f"{args.get} = {config.get(args.get)}")
    elif args.set and args.value is not None:
        value = args.value
        if value.lower() in ('true', 'false'):
            value = value.lower() == 'true'
        elif value.lower() == 'none':
            value = None
        else:
            try:
                value = int(value)
            except ValueError:
                try:
                    value = float(value)
                except ValueError:
                    pass
        config.set(args.set, value)
        config.save()
        print(f"Set {args.set} = {value}")
    else:
        print(f"Configuration file: {config.config_file}")
    return 0


# --- Parser construction ---

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument('--log-level', default='INFO', choices=LOG_LEVELS)
    p.add_argument('--log-file', help='Also write logs to this file')
    p.add_argument('--profile', action='store_true', help='Log timing of forward/backward/optimizer sections')
    p.add_argument('--no-progress', action='store_true', help='Disable progress spinner')


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument('--manifest', help='Dataset manifest (image<TAB>mask<TAB>id per line)')
    p.add_argument('--synthetic', type=int, metavar='N', help='Use N generated samples instead of a manifest')
    p.add_argument('--resolution', type=int, help='Working resolution (default from config, 128)')
    p.add_argument('--workers', type=int, default=1, help='Parallel workers')


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument('--seed', type=int, default=0, help='Master seed')
    p.add_argument('--epochs', type=int)
    p.add_argument('--lr', type=float, help='Adam learning rate')
    p.add_argument('--batch', type=int, help='Mini-batch size')
    p.add_argument('--depth', type=int, help='U-Net depth (pooling levels)')
    p.add_argument('--base-channels', type=int, help='Channels at the first level')


def _add_thresholds(p: argparse.ArgumentParser) -> None:
    p.add_argument('--t1', type=float, help='Sky/Thin threshold')
    p.add_argument('--t2', type=float, help='Thin/Thick threshold')


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog='cloudseg', description='U-Net sky/cloud segmentation')
    p.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = p.add_subparsers(dest='command', required=True)

    tr = sub.add_parser('train', help='Train one model and write a checkpoint')
    _add_data(tr)
    _add_model(tr)
    tr.add_argument('--out', default='model.ckpt', help='Checkpoint path')
    tr.add_argument('--resume', metavar='CKPT', help='Continue training from a checkpoint')
    _add_common(tr)

    inf = sub.add_parser('infer', help='Predict one image')
    inf.add_argument('--checkpoint', required=True)
    inf.add_argument('--image', required=True)
    inf.add_argument('--out', default='.', help='Output directory')
    _add_thresholds(inf)
    _add_common(inf)

    ev = sub.add_parser('eval', help='Evaluate a checkpoint on a dataset')
    ev.add_argument('--checkpoint')
    _add_data(ev)
    ev.add_argument('--split-seed', type=int, help='Evaluate only the test split of this seed')
    ev.add_argument('--oracle', action='store_true', help='Use the ground truth as prediction')
    ev.add_argument('--verbose-report', action='store_true', help='Also print per-image averaged errors')
    _add_thresholds(ev)
    _add_common(ev)

    ex = sub.add_parser('experiment', help='Repeated random-split train/evaluate protocol')
    _add_data(ex)
    _add_model(ex)
    ex.add_argument('--runs', type=int, default=10)
    ex.add_argument('--out', default='results', help='Report directory')
    ex.add_argument('--oracle', action='store_true', help='Use the ground truth as prediction (no training)')
    ex.add_argument('--verbose-report', action='store_true', help='Add per-image averaged errors')
    ex.add_argument('--extra-format', action='append', choices=[f for f in SUPPORTED_REPORT_FORMATS if f != 'csv'],
                    help='Also write report.json / report.xlsx (repeatable)')
    _add_thresholds(ex)
    _add_common(ex)

    rd = sub.add_parser('render', help='Render a saved 16-bit probability mask')
    rd.add_argument('--input', required=True, help='mask16.png written by infer')
    rd.add_argument('--out', default='.', help='Output directory')
    _add_thresholds(rd)
    _add_common(rd)

    sy = sub.add_parser('synth', help='Write a synthetic dataset')
    sy.add_argument('--count', type=int, default=32)
    sy.add_argument('--seed', type=int, default=0)
    sy.add_argument('--resolution', type=int)
    sy.add_argument('--out', required=True, help='Dataset directory')
    _add_common(sy)

    cf = sub.add_parser('config', help='View or update configuration')
    cf.add_argument('--list', action='store_true', help='List all configuration values')
    cf.add_argument('--get', metavar='KEY', help='Get specific configuration value')
    cf.add_argument('--set', metavar='KEY', help='Set configuration value')
    cf.add_argument('--value', help='Value to set (used with --set)')
    _add_common(cf)

    return p


COMMANDS = {
    'train': cmd_train,
    'infer': cmd_infer,
    'eval': cmd_eval,
    'experiment': cmd_experiment,
    'render': cmd_render,
    'synth': cmd_synth,
    'config': cmd_config,
}


# --- Main entry ---

def main(argv: Optional[Sequence[str]] = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)

    configure_logging(args.log_level, args.log_file, with_process=(getattr(args, "workers", 1) or 1) > 1)
    profiler.enabled = args.profile or bool(config.get('profiling_enabled', False))

    try:
        code = COMMANDS[args.command](args)
        if profiler.enabled:
            profiler.log_report()
        sys.exit(code)
    except DivergenceError as e:
        logger.error("Training diverged: %s", e)
        sys.exit(exit_code_for(e))
    except CloudSegException as e:
        logger.error("%s", e)
        sys.exit(exit_code_for(e))
    except KeyboardInterrupt:
        logger.warning("Operation interrupted by user")
        sys.exit(130)
    except Exception as e:
        logger.error("Unhandled error: %s", e, exc_info=True)
        sys.exit(1)


if __name__ == '__main__':
    main()
