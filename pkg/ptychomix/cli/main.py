"""CLI commands for PtychoMix."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ptychomix.config import Config, RuntimeSettings
from ptychomix.dataset import (
    MANIFEST_NAME,
    PROBE_FILE,
    GroundTruth,
    load_dataset,
    load_ground_truth,
    save_dataset,
    simulate_dataset,
)
from ptychomix.exceptions import ConfigurationError
from ptychomix.field import ComplexField
from ptychomix.io import (
    read_field,
    read_pga1,
    render_complex_png,
    sha256_file,
    write_csv,
    write_field,
    write_json,
    write_pga1,
)
from ptychomix.loss import LossVariant
from ptychomix.metrics import FULL_FRAME, correlation, footprint_region
from ptychomix.noise import calibrate_dark, minimal_black_level, sample_dark_stack
from ptychomix.scene import build_scene, probe_at_budget
from ptychomix.solver import InitialObject, ReconstructionMode, reconstruct, run_probe_calibration
from ptychomix.sweep import SweepSpec, run_sweep, summarize

logger = logging.getLogger(__name__)

DEFAULT_PHOTONS = 1e6
SUMMARY_HEADER = ["budget", "variant", "mean_C", "stderr_C", "runs", "diverged"]


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigurationError(f"'{args.command}' needs --out <dir>")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, default: int) -> int:
    return default if args.seed is None else args.seed


def _recon_config(args, config: Config, settings: RuntimeSettings, mode=None):
    loss = config.loss
    if args.loss:
        loss = loss.model_copy(update={"variant": LossVariant(args.loss)})
    if args.zero_crop:
        loss = loss.model_copy(update={"zero_crop": True})
    schedule = config.schedule
    if args.epochs is not None:
        schedule = schedule.model_copy(update={"epochs": args.epochs})
    recon = config.reconstruction_config(threads=settings.threads)
    update = {"loss": loss, "schedule": schedule}
    if mode is not None:
        update["mode"] = mode
    return recon.model_copy(update=update)


def simulate(args, config: Config, settings: RuntimeSettings):
    """Simulate a noisy dataset with its ground truth."""
    out = _out_dir(args)
    seed = _seed(args, config.scene.seed)
    photons = args.photons or DEFAULT_PHOTONS
    scene = build_scene(config.scene)
    dataset = simulate_dataset(scene.scenario, config.noise, seed, photons=photons,
                               pattern=scene.pattern)
    probe = probe_at_budget(scene.scenario.probe, photons)
    save_dataset(dataset, out, GroundTruth(scene.scenario.obj, probe),
                 extra={"command": "simulate", "config": config.to_dict()})
    render_complex_png(scene.scenario.obj, out / "object_gt.png")
    render_complex_png(probe, out / "probe.png")
    print(f"Simulated {dataset.n_positions} frames at {photons:g} photons into {out}")


def darkcal(args, config: Config, settings: RuntimeSettings):
    """Variance map and mean dark frame from a dark stack (file or simulated)."""
    out = _out_dir(args)
    noise = config.noise
    if args.stack:
        stack, pitch = read_pga1(args.stack)
        gain_inv = noise.gain_inv_e_per_adu
        source = {"stack": str(args.stack), "sha256": sha256_file(args.stack)}
    else:
        model = noise.to_model(_seed(args, config.scene.seed))
        count = args.frames or noise.dark_frames
        stack = sample_dark_stack(model, (config.scene.probe_px,) * 2, count)
        pitch, gain_inv = config.scene.pitch_m, 1.0
        source = {"simulated": noise.model_dump(mode="json"), "seed": model.seed, "frames": count}
    calibration = calibrate_dark(stack, gain_inv)
    files = {
        "variance.pga1": write_pga1(out / "variance.pga1", calibration.variance, pitch),
        "dark_mean.pga1": write_pga1(out / "dark_mean.pga1", calibration.mean, pitch),
    }
    summary = {
        "command": "darkcal",
        "source": source,
        "gain_inv_e_per_adu": gain_inv,
        "mean_variance_counts2": float(calibration.variance.mean()),
        "minimal_black_level": minimal_black_level(stack - stack.mean()),
        "files": {name: sha256_file(path) for name, path in files.items()},
    }
    write_json(out / "darkcal.json", summary)
    print(f"Mean readout variance: {summary['mean_variance_counts2']:.4f} counts^2")


def _load_probe(args, dataset_dir: Path) -> Optional[ComplexField]:
    if args.probe:
        return read_field(args.probe)
    if (dataset_dir / PROBE_FILE).exists():
        return read_field(dataset_dir / PROBE_FILE)
    return None


def _write_reconstruction(out: Path, report, truth: Optional[GroundTruth], extra: dict):
    write_field(out / "object.pga1", report.obj)
    write_field(out / "probe.pga1", report.probe)
    reference = truth.obj if truth is not None else None
    render_complex_png(report.obj, out / "object.png", reference)
    render_complex_png(report.probe, out / "probe.png")
    document = report.to_dict()
    document.update(extra)
    write_json(out / "report.json", document)


def reconstruct_cmd(args, config: Config, settings: RuntimeSettings):
    """Reconstruct the object of a dataset with the configured loss."""
    out = _out_dir(args)
    dataset_dir = Path(args.dataset)
    dataset = load_dataset(dataset_dir)
    recon = _recon_config(args, config, settings)
    initial_object = None
    if args.initial_object:
        initial_object = read_field(args.initial_object)
        recon = recon.model_copy(update={"initial_object": InitialObject.SUPPLIED})
    report = reconstruct(dataset, recon, probe=_load_probe(args, dataset_dir),
                         initial_object=initial_object)
    truth = load_ground_truth(dataset_dir)
    extra = {"command": "reconstruct", "dataset": str(dataset_dir)}
    if truth is not None:
        region = footprint_region(dataset.object_shape, truth.probe, dataset.offsets)
        extra["correlation"] = correlation(truth.obj, report.obj, region)
        print(f"Correlation with ground truth: {extra['correlation']:.6f}")
    _write_reconstruction(out, report, truth, extra)
    print(f"Final fidelity {report.final_fidelity:.6g} after {len(report.epochs)} epochs")


def calibrate_probe_cmd(args, config: Config, settings: RuntimeSettings):
    """Joint probe/object reconstruction on a calibration dataset."""
    out = _out_dir(args)
    dataset_dir = Path(args.dataset)
    dataset = load_dataset(dataset_dir)
    recon = _recon_config(args, config, settings, mode=ReconstructionMode.JOINT)
    initial_probe = read_field(args.probe) if args.probe else None
    result = run_probe_calibration(dataset, recon, initial_probe)
    truth = load_ground_truth(dataset_dir)
    extra = {"command": "calibrate-probe", "dataset": str(dataset_dir), "leakage": result.leakage}
    if truth is not None:
        extra["probe_correlation"] = correlation(truth.probe, result.probe)
        print(f"Probe correlation with ground truth: {extra['probe_correlation']:.6f}")
    _write_reconstruction(out, result.report, truth, extra)
    print(f"Probe energy outside support: {result.leakage:.2%}")


def sweep(args, config: Config, settings: RuntimeSettings):
    """Correlation versus photon budget for every loss variant."""
    out = _out_dir(args)
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.epochs is not None:
        update["epochs"] = args.epochs
    if args.photons:
        update["photon_budgets"] = [args.photons]
    spec = SweepSpec(**{**config.sweep.model_dump(), **update})
    sweep_csv = out / "sweep.csv"
    rows = run_sweep(spec, config.scene, config.noise, config.reconstruction_config(),
                     out_csv=sweep_csv, threads=settings.threads)
    summary = summarize(rows)
    summary_csv = write_csv(out / "summary.csv", SUMMARY_HEADER, (
        [repr(s.budget), s.variant.value, repr(s.mean), repr(s.stderr), s.runs, s.diverged]
        for s in summary
    ))
    write_json(out / MANIFEST_NAME, {
        "command": "sweep",
        "config": config.to_dict(),
        "sweep": spec.model_dump(mode="json"),
        "seeds": [spec.seed + rep for rep in range(spec.repetitions)],
        "threads": settings.threads,
        "files": {path.name: sha256_file(path) for path in (sweep_csv, summary_csv)},
    })
    print(f"\n{'Budget':<12} {'Variant':<14} {'mean C':<10} {'stderr':<10}")
    print("-" * 48)
    for s in summary:
        print(f"{s.budget:<12.3g} {s.variant.value:<14} {s.mean:<10.4f} {s.stderr:<10.4f}")


def evaluate(args, config: Config, settings: RuntimeSettings):
    """Correlation of a reconstructed object against the dataset ground truth."""
    dataset_dir = Path(args.dataset)
    truth = load_ground_truth(dataset_dir)
    if truth is None:
        raise ConfigurationError(f"{dataset_dir} has no ground truth (object_gt.pga1, probe.pga1)")
    obj = read_field(args.object)
    if args.full_frame:
        region = FULL_FRAME
    else:
        dataset = load_dataset(dataset_dir)
        region = footprint_region(dataset.object_shape, truth.probe, dataset.offsets)
    c = correlation(truth.obj, obj, region)
    print(f"C = {c:.6f} ({'full frame' if args.full_frame else 'illuminated region'})")
    if args.out:
        out = _out_dir(args)
        write_json(out / "eval.json", {
            "command": "eval",
            "object": str(args.object),
            "dataset": str(dataset_dir),
            "region": "full_frame" if args.full_frame else "footprint",
            "correlation": c,
        })


COMMANDS = {
    'simulate': simulate,
    'darkcal': darkcal,
    'reconstruct': reconstruct_cmd,
    'calibrate-probe': calibrate_probe_cmd,
    'sweep': sweep,
    'eval': evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Config file path (TOML); defaults apply without one')
    common.add_argument('--seed', type=int, help='Random seed')
    common.add_argument('--out', help='Output directory')
    common.add_argument('--threads', type=int, help='Worker threads (env PTYCHOMIX_THREADS)')
    common.add_argument('--log-level', help='Logging level (env PTYCHOMIX_LOG_LEVEL)')

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument('--loss', choices=[v.value for v in LossVariant], help='Fidelity loss')
    solver.add_argument('--zero-crop', action='store_true', help='Clip negative counts to zero')
    solver.add_argument('--epochs', type=int, help='Number of epochs')

    parser = argparse.ArgumentParser(description="PtychoMix CLI")
    subparsers = parser.add_subparsers(dest='command', help='Command')

    sim_parser = subparsers.add_parser('simulate', parents=[common], help='Simulate a dataset')
    sim_parser.add_argument('--photons', type=float, help='Photons per exposure')

    dark_parser = subparsers.add_parser('darkcal', parents=[common], help='Dark-frame calibration')
    dark_parser.add_argument('--stack', help='Dark stack (3-D PGA1, ADU); simulated if omitted')
    dark_parser.add_argument('--frames', type=int, help='Simulated dark frames')

    recon_parser = subparsers.add_parser('reconstruct', parents=[common, solver],
                                         help='Reconstruct an object')
    recon_parser.add_argument('--dataset', required=True, help='Dataset directory')
    recon_parser.add_argument('--probe', help='Probe PGA1 file (default: dataset probe)')
    recon_parser.add_argument('--initial-object', help='Initial object PGA1 file')

    cal_parser = subparsers.add_parser('calibrate-probe', parents=[common, solver],
                                       help='Recover the probe from a calibration dataset')
    cal_parser.add_argument('--dataset', required=True, help='Dataset directory')
    cal_parser.add_argument('--probe', help='Initial probe PGA1 file (default: disc)')

    sweep_parser = subparsers.add_parser('sweep', parents=[common], help='Photon-budget sweep')
    sweep_parser.add_argument('--photons', type=float, help='Run a single photon budget')
    sweep_parser.add_argument('--epochs', type=int, help='Epochs per reconstruction')

    eval_parser = subparsers.add_parser('eval', parents=[common], help='Correlation vs ground truth')
    eval_parser.add_argument('--dataset', required=True, help='Dataset directory with ground truth')
    eval_parser.add_argument('--object', required=True, help='Reconstructed object PGA1 file')
    eval_parser.add_argument('--full-frame', action='store_true',
                             help='Evaluate on the full frame instead of the illuminated region')
    return parser


def main(argv: Optional[Sequence[str]] = None):
    """CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return

    try:
        overrides = {}
        if args.threads is not None:
            overrides['threads'] = args.threads
        if args.log_level:
            overrides['log_level'] = args.log_level
        settings = RuntimeSettings(**overrides)
        logging.basicConfig(
            level=getattr(logging, settings.log_level),
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        config = Config(args.config)
        COMMANDS[args.command](args, config, settings)
    except KeyboardInterrupt:
        print("\nInterrupted")
        sys.exit(130)
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"Error: {e}")
        sys.exit(1)


if __name__ == '__main__':
    main()
