"""Command-line entry point: ``lsi <subcommand> [--config FILE] [--set section.key=value ...]``.

Each subcommand writes its artifacts into a fresh run directory
``<run.out>/<subcommand>-<timestamp>-seed<seed>`` together with the fully
resolved ``config.txt``.  Exit status: 0 success, 2 configuration or
missing-input error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import experiment as ex
from . import plots
from .acquisition import calibrate_white, expected_white, sense, sensed_measurements, write_sensed_csv, WHITE_INDEX
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig
from .data import DatasetError, decode_image, save_png
from .decoder import batched
from .fsi import fsi_image
from .metrics import metrics
from .optics import ConfigurationError, measure_array, occupancy_histogram
from .training import LOG_COLUMNS

log = logging.getLogger("lsi")

CONFIG_ERRORS = (ConfigError, ConfigurationError, DatasetError, CheckpointError, ex.MissingDependency)


def run_dir(cfg: RunConfig, name: str) -> Path:
    root = Path(cfg["run"]["out"])
    base = f"{name}-{time.strftime('%Y%m%d-%H%M%S')}-seed{cfg['run']['seed']}"
    path = root / base
    k = 1
    while path.exists():
        path = root / f"{base}-{k}"
        k += 1
    path.mkdir(parents=True)
    (path / "config.txt").write_text(cfg.dumps())
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_make_dataset(cfg: RunConfig, out: Path) -> None:
    data = cfg["data"]
    path = ex.make_desk_dataset(data["dir"], count=int(data["count"]), size=int(data["size"]),
                                seed=int(cfg["run"]["seed"]))
    ex.write_csv(out / "dataset.csv", [{"dir": str(path), "count": int(data["count"])}])
    print(f"wrote {data['count']} images to {path}")


def cmd_pretrain(cfg: RunConfig, out: Path) -> None:
    ds = ex.dataset(cfg, out / "manifest.tsv")
    G, N, report = ex.pretrain(cfg, ds)
    ex.save_autoencoder(out / "autoencoder.lsi", G, N)
    ex.write_csv(out / "pretrain_log.csv", report.rows())
    ex.write_csv(out / "pretrain_metrics.csv", [{"heldout_psnr": report.heldout_psnr}])
    plots.loss_curves(report.rows(), ["train_loss"], out / "pretrain_loss.png", title="autoencoder")
    test = ds.subset("test")
    plots.reconstruction_grid({"image": test, "G(N(I))": batched(lambda t: G(N(t)), test)},
                              out / "pretrain_reconstructions.png")
    print(f"held-out autoencoder PSNR {report.heldout_psnr:.2f} dB")


def cmd_train(cfg: RunConfig, out: Path) -> None:
    G, N = ex.load_autoencoder(cfg["checkpoint"]["autoencoder"], cfg.decoder())
    ds = ex.dataset(cfg, out / "manifest.tsv")
    system, trained = ex.train(cfg, ds, G, N, log_path=out / "train_log.csv")
    ex.save_system(out / "system.lsi", system)
    summary = ex.summarize(ex.evaluate(system, ds.subset("test")))
    ex.write_csv(out / "train_metrics.csv", [{"d": system.d, **summary}])
    plots.loss_curves(trained.log, [c for c in LOG_COLUMNS[2:7]], out / "train_loss.png", title=f"d={system.d}")
    plots.occupancy_histogram({"after phase 1": trained.phase1_occupancy,
                               "final": occupancy_histogram(system.optics)},
                              system.optics.mn, out / "occupancy.png")
    print(f"d={system.d}: held-out PSNR {summary['psnr']:.2f} dB, latent L1 {summary['latent_l1']:.4f}")


def cmd_reconstruct(cfg: RunConfig, out: Path) -> None:
    system = ex.load_system(cfg["checkpoint"]["system"], cfg)
    image_path = Path(cfg["data"]["image"])
    if not image_path.is_file():
        raise ConfigError("data.image must name an existing PNG/PGM file")
    size = int(cfg["data"]["size"])
    img = decode_image(image_path, (size, size), int(cfg["data"]["channels"]))[None]
    recon, z = system.reconstruct(img)
    m = metrics(recon[0], img[0], z[0], batched(system.N, img)[0])
    save_png(out / f"{image_path.stem}_recon.png", recon[0])
    ex.write_csv(out / "recon.csv", [{"image": str(image_path), "psnr": m.psnr, "latent_l1": m.latent_l1}])
    print(f"{image_path.name}: PSNR {m.psnr:.2f} dB")


def cmd_evaluate(cfg: RunConfig, out: Path) -> None:
    system = ex.load_system(cfg["checkpoint"]["system"], cfg)
    ds = ex.dataset(cfg, out / "manifest.tsv")
    test = ds.subset("test")
    rows = ex.evaluate(system, test)
    ex.write_csv(out / "eval.csv", [{"id": i, "psnr": m.psnr, "latent_l1": m.latent_l1, "pixel_l1": m.pixel_l1}
                                    for i, m in zip(ds.subset_ids("test"), rows)])
    summary = {"d": system.d, **{f"lsi_{k}": v for k, v in ex.summarize(rows).items()},
               "fsi_psnr": ex.fsi_psnr(test, system.d)}
    if ds.labels:
        held = np.concatenate([ds.split["val"], ds.split["test"]])
        acc = ex.retrieval(system, ds.images[held], [ds.labels[ds.ids[i]] for i in held])
        summary.update(retrieval_latent=float(acc["latent"]), retrieval_pixel=float(acc["pixel"]))
    ex.write_csv(out / "eval_summary.csv", [summary])
    recon, _ = system.reconstruct(test)
    plots.reconstruction_grid({"image": test, f"LSI d={system.d}": recon,
                               f"FSI {system.d}": np.stack([fsi_image(x[0], system.d)[None] for x in test[:8]])},
                              out / "reconstructions.png")
    print(f"d={system.d}: LSI {summary['lsi_psnr']:.2f} dB vs FSI {summary['fsi_psnr']:.2f} dB")


def cmd_fsi(cfg: RunConfig, out: Path) -> None:
    ds = ex.dataset(cfg, out / "manifest.tsv")
    test = ds.subset("test")
    rows = []
    for budget in cfg["fsi"]["budgets"]:
        rows.append({"budget": int(budget), "psnr": ex.fsi_psnr(test, int(budget))})
        save_png(out / f"fsi_b{budget}.png", fsi_image(test[0][0], int(budget)))
    ex.write_csv(out / "fsi_metrics.csv", rows)
    for r in rows:
        print(f"budget {r['budget']}: {r['psnr']:.2f} dB")


def cmd_calibrate(cfg: RunConfig, out: Path) -> None:
    system = ex.load_system(cfg["checkpoint"]["system"], cfg)
    sensor = cfg.sensor()
    channels = int(cfg["data"]["channels"])
    white = np.ones((1, channels, system.optics.m, system.optics.n))
    readings = sense(sensor, measure_array(system.optics, white)[0], index=WHITE_INDEX)
    scale = calibrate_white(readings, expected_white(system.optics, channels))
    ex.write_csv(out / "calibration.csv", [{"gain": sensor.gain, "bias": sensor.bias, "scale": scale,
                                            "recovered_gain": 1.0 / scale,
                                            "rel_error": abs(1.0 / scale - sensor.gain) / sensor.gain}])
    print(f"global scale {scale:.6f} (recovered gain {1.0 / scale:.4f})")


def cmd_finetune(cfg: RunConfig, out: Path) -> None:
    system = ex.load_system(cfg["checkpoint"]["system"], cfg)
    ds = ex.dataset(cfg, out / "manifest.tsv")
    fcfg = cfg.finetune()
    sensor = cfg.sensor()
    result, E = ex.calibrate_and_finetune(system, ds, sensor, fcfg, cfg.losses())
    train_imgs = ds.subset("train")[: fcfg.n_pairs]
    sensed = sensed_measurements(sensor, system.optics, train_imgs, result.scale, offset=0)
    write_sensed_csv(out / "sensed.csv", sensed, [ds.paths[i] for i in ds.split["train"][: fcfg.n_pairs]])
    ex.save_system(out / "system.lsi", ex.System(system.optics, E, system.G, system.N))
    ex.write_csv(out / "finetune.csv", [{"scale": result.scale, "pre_psnr": result.pre_psnr,
                                         "post_psnr": result.post_psnr,
                                         "gain_db": result.post_psnr - result.pre_psnr}])
    print(f"fine-tuning: {result.pre_psnr:.2f} -> {result.post_psnr:.2f} dB")


def cmd_export_latents(cfg: RunConfig, out: Path) -> None:
    system = ex.load_system(cfg["checkpoint"]["system"], cfg)
    ds = ex.dataset(cfg, out / "manifest.tsv")
    images = ds.subset("test")
    source = cfg["export"]["source"]
    if source == "lsi":
        z = system.latents(images)
    elif source == "inversion":
        z = batched(system.N, images)
    else:
        raise ConfigError("export.source must be 'lsi' or 'inversion'")
    z = z.reshape(len(images), -1)
    rows = [{"id": i, **{f"z{k}": float(v) for k, v in enumerate(row)}} for i, row in zip(ds.subset_ids("test"), z)]
    ex.write_csv(out / "latents.csv", rows, ["id"] + [f"z{k}" for k in range(z.shape[1])])
    print(f"exported {len(rows)} latent stacks ({z.shape[1]} values each)")


def cmd_export_masks(cfg: RunConfig, out: Path) -> None:
    system = ex.load_system(cfg["checkpoint"]["system"], cfg)
    masks = system.optics.masks()
    (out / "masks").mkdir()
    rows = []
    for j, mask in enumerate(masks):
        save_png(out / "masks" / f"mask_{j:03d}.png", mask)
        ones = int(mask.sum())
        rows.append({"index": j, "ones": ones, "occupancy": ones / system.optics.mn})
    ex.write_csv(out / "masks.csv", rows)
    plots.occupancy_histogram({"masks": occupancy_histogram(system.optics)}, system.optics.mn,
                              out / "occupancy.png")
    print(f"exported {len(rows)} masks")


def cmd_report(cfg: RunConfig, out: Path) -> None:
    """Full desk study: pretrain (or reuse), LSI sweep over d, FSI baseline, retrieval, fine-tuning."""
    from .report import run_report

    run_report(cfg, out)


COMMANDS = {
    "make-dataset": (cmd_make_dataset, "render the labeled desk dataset into data.dir"),
    "pretrain": (cmd_pretrain, "fit and freeze the generator/inversion autoencoder"),
    "train": (cmd_train, "jointly train masks and digital encoder (needs checkpoint.autoencoder)"),
    "reconstruct": (cmd_reconstruct, "reconstruct data.image from simulated measurements"),
    "evaluate": (cmd_evaluate, "held-out metrics, FSI comparison and retrieval proxy"),
    "fsi": (cmd_fsi, "Fourier single-pixel baseline over fsi.budgets"),
    "calibrate": (cmd_calibrate, "white-image global scale for the configured sensor"),
    "finetune": (cmd_finetune, "calibrate, sense and fine-tune the digital encoder"),
    "export-latents": (cmd_export_latents, "write test-split latent stacks as CSV"),
    "export-masks": (cmd_export_masks, "write binary masks as {0,255} PNGs"),
    "report": (cmd_report, "run the whole desk study and render the report figures"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsi", description="Latent space imaging desk toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                       help="log progress to stderr")
        p.add_argument("--config", type=Path, help="key-value config file (section.key = value)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.overrides)
        out = run_dir(cfg, args.command)
        COMMANDS[args.command][0](cfg, out)
    except CONFIG_ERRORS as exc:
        print(f"lsi {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"lsi {args.command}: runtime error: {exc}", file=sys.stderr)
        return 1
    print(f"artifacts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
