"""Desk study: compression sweep, FSI comparison, retrieval proxy and sensed fine-tuning.

Everything lands in one directory: checkpoints, CSV tables and the
figures rendered from them.  ``sweep.reuse`` may point at an earlier
report directory whose ``system_d*.lsi`` files are then loaded instead
of retrained.
"""

from __future__ import annotations

import logging
import shutil
from pathlib import Path

import numpy as np

from . import experiment as ex
from . import plots
from .config import RunConfig
from .fsi import fsi_image
from .optics import occupancy_histogram

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ["d", "lsi_psnr", "fsi_psnr", "margin_db", "latent_l1", "pixel_l1",
                 "occupancy_std_phase1", "occupancy_std_final", "phase1_epochs"]


def _autoencoder(cfg: RunConfig, ds, out: Path):
    path = cfg["checkpoint"]["autoencoder"]
    if path:
        G, N = ex.load_autoencoder(path, cfg.decoder())
        shutil.copyfile(path, out / "autoencoder.lsi")
    else:
        G, N, report = ex.pretrain(cfg, ds)
        ex.save_autoencoder(out / "autoencoder.lsi", G, N)
        ex.write_csv(out / "pretrain_log.csv", report.rows())
        plots.loss_curves(report.rows(), ["train_loss"], out / "pretrain_loss.png", title="autoencoder")
    test = ds.subset("test")
    heldout = ex.psnr(ex.batched(lambda t: G(N(t)), test), test)
    ex.write_csv(out / "pretrain_metrics.csv", [{"heldout_psnr": heldout}])
    log.info("autoencoder held-out PSNR %.2f dB", heldout)
    return G, N


def _system_for(cfg: RunConfig, ds, G, N, d: int, out: Path) -> tuple[ex.System, dict]:
    reuse = cfg["sweep"]["reuse"]
    ckpt = out / f"system_d{d}.lsi"
    if reuse and (Path(reuse) / ckpt.name).is_file():
        src = Path(reuse)
        shutil.copyfile(src / ckpt.name, ckpt)
        for extra in (f"train_log_d{d}.csv", f"phase1_occupancy_d{d}.csv"):
            if (src / extra).is_file():
                shutil.copyfile(src / extra, out / extra)
        system = ex.load_system(ckpt, cfg)
        phase1 = [float(r["ones"]) for r in ex.read_csv(out / f"phase1_occupancy_d{d}.csv")]
        epochs = sum(1 for r in ex.read_csv(out / f"train_log_d{d}.csv") if r["phase"] == "1")
        return system, {"phase1": np.array(phase1), "phase1_epochs": epochs}
    system, trained = ex.train(cfg, ds, G, N, d=d, log_path=out / f"train_log_d{d}.csv")
    ex.save_system(ckpt, system)
    ex.write_csv(out / f"phase1_occupancy_d{d}.csv",
                 [{"index": j, "ones": int(v)} for j, v in enumerate(trained.phase1_occupancy)])
    plots.loss_curves(trained.log, ["lat", "pips", "l2", "energy", "val_lat"], out / f"train_loss_d{d}.png",
                      title=f"d={d}")
    # evaluate what was saved, so reloading the checkpoint reproduces the table
    return ex.load_system(ckpt, cfg), {"phase1": trained.phase1_occupancy, "phase1_epochs": trained.phase1_epochs}


def run_report(cfg: RunConfig, out: Path) -> None:
    ds = ex.dataset(cfg, out / "manifest.tsv")
    G, N = _autoencoder(cfg, ds, out)
    test = ds.subset("test")
    rows, columns, systems = [], {"image": test}, {}
    for d in cfg["sweep"]["ds"]:
        d = int(d)
        system, info = _system_for(cfg, ds, G, N, d, out)
        systems[d] = system
        summary = ex.summarize(ex.evaluate(system, test))
        fsi = ex.fsi_psnr(test, d)
        occ = occupancy_histogram(system.optics)
        rows.append({"d": d, "lsi_psnr": summary["psnr"], "fsi_psnr": fsi, "margin_db": summary["psnr"] - fsi,
                     "latent_l1": summary["latent_l1"], "pixel_l1": summary["pixel_l1"],
                     "occupancy_std_phase1": float(np.std(info["phase1"])), "occupancy_std_final": float(occ.std()),
                     "phase1_epochs": int(info["phase1_epochs"])})
        log.info("d=%d LSI %.2f dB, FSI %.2f dB", d, summary["psnr"], fsi)
        columns[f"LSI {d}"] = system.reconstruct(test[:8])[0]
        columns[f"FSI {d}"] = np.stack([fsi_image(x[0], d)[None] for x in test[:8]])
        plots.occupancy_histogram({"after phase 1": info["phase1"], "final": occ}, system.optics.mn,
                                  out / f"occupancy_d{d}.png")
    ex.write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
    plots.compression_sweep(rows, out / "compression_sweep.png")
    plots.reconstruction_grid(columns, out / "reconstructions.png")

    if ds.labels:
        held = np.concatenate([ds.split["val"], ds.split["test"]])
        labels = [ds.labels[ds.ids[i]] for i in held]
        acc_rows = []
        for d, system in systems.items():
            acc = ex.retrieval(system, ds.images[held], labels)
            acc_rows.append({"d": d, "latent_acc": float(acc["latent"]), "pixel_acc": float(acc["pixel"]),
                             "items": len(held)})
        ex.write_csv(out / "retrieval.csv", acc_rows)

    d_ft = int(cfg["sweep"]["finetune_d"])
    if d_ft in systems:
        result, E = ex.calibrate_and_finetune(systems[d_ft], ds, cfg.sensor(), cfg.finetune(), cfg.losses())
        ex.save_system(out / f"system_d{d_ft}_finetuned.lsi", ex.System(systems[d_ft].optics, E, G, N))
        ex.write_csv(out / "finetune.csv", [{"d": d_ft, "scale": result.scale, "true_gain": result.true_gain,
                                             "scale_error": result.scale_error, "pre_psnr": result.pre_psnr,
                                             "post_psnr": result.post_psnr,
                                             "gain_db": result.post_psnr - result.pre_psnr}])
