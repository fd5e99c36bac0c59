"""Run orchestration behind the CLI subcommands.

Each run_* function takes a resolved config dict, validates everything it
can before touching the filesystem, and leaves a self-describing artifact
directory: logs and metrics as CSV, checkpoints in the binary format, and a
run.info provenance file.
"""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np
import torch

from . import config as cfgmod
from .augment import augment_and_normalize
from .checkpoint import load_checkpoint, load_module_params, module_params, save_checkpoint
from .dataio import SPLITS, load_split, write_split
from .errors import (
    BadConfig,
    InsufficientData,
    LabelOutOfRange,
    MissingInput,
    NoRunsFound,
    PromptDasError,
)
from .imaging import ImageSample, assemble_spatiotemporal, gasf_transform, stft_spectrogram
from .mae import DecoderConfig, MaskedAutoencoder, PretrainSchedule, pretrain
from .metrics import METRICS_FILENAME, read_metrics_csv, write_metrics_csv
from .patches import patchify
from .signals import DenoiseConfig, SignalRecord, denoise_record
from .synth import (
    ScenarioSpec,
    default_gait_scenario,
    default_leak_scenario,
    generate_dataset,
    parse_scenario_file,
    write_scenario_file,
)
from .training import (
    FinetuneResult,
    FinetuneSchedule,
    evaluate_model,
    finetune,
    grid_search,
    nested_subset_indices,
    sample_label,
)
from .vit import ModelConfig, VisionTransformer, vit_base_config
from .vpt import FinetuneMethod, PromptBank, PromptConfig, count_trainable

BUILTIN_SCENARIOS = {"gait6": default_gait_scenario, "leak4": default_leak_scenario}


def _setup_torch() -> None:
    torch.manual_seed(0)
    torch.set_num_threads(1)


def _write_info(out_dir: Path, entries: dict) -> None:
    lines = [f"{k} = {v}" for k, v in entries.items()]
    (Path(out_dir) / "run.info").write_text("\n".join(lines) + "\n")


# -- synth --------------------------------------------------------------------

def _resolve_scenario(cfg: dict) -> ScenarioSpec:
    name = cfg["scenario"]
    if name in BUILTIN_SCENARIOS:
        spec = BUILTIN_SCENARIOS[name]()
    else:
        spec = parse_scenario_file(Path(name))
    counts = {}
    for key in ("train_per_class", "val_per_class", "test_per_class"):
        if cfg.get(key) is not None:
            counts[key] = cfg[key]
    if counts:
        spec = dataclasses.replace(spec, **counts)
    spec.validate()
    return spec


def run_synth(cfg: dict) -> Path:
    spec = _resolve_scenario(cfg)
    out_dir = cfgmod.default_out_dir(cfg["out_dir"], "synth")
    generate_dataset(
        spec,
        seed=cfg["seed"],
        out_dir=out_dir,
        image_size=cfg["image_size"],
        representation=cfg["representation"],
        keep_raw=cfg["keep_raw"],
    )
    write_scenario_file(spec, out_dir / "scenario.cfg")
    return out_dir


# -- preprocess ---------------------------------------------------------------

def _read_info_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        return {}
    return cfgmod.parse_config_text(path.read_text(), source=str(path))


def run_preprocess(cfg: dict) -> Path:
    """Raw signal splits -> denoised representation images."""
    in_dir = Path(cfg["input"])
    if (in_dir / "raw").is_dir():
        signal_root = in_dir / "raw"
    elif in_dir.is_dir():
        signal_root = in_dir
    else:
        raise MissingInput(f"input directory not found: {in_dir}")
    info = _read_info_file(in_dir / "dataset.info")
    sample_rate = cfg["sample_rate"]
    if sample_rate is None:
        if "sample_rate" not in info:
            raise BadConfig("sample_rate not given and no dataset.info to infer it from")
        sample_rate = float(info["sample_rate"])
    representation = cfg["representation"]
    if representation not in ("spatiotemporal", "gasf", "stft", "mixed"):
        raise BadConfig(f"unknown representation {representation!r}")
    denoise_cfg = DenoiseConfig(
        threshold=cfg["denoise.threshold"],
        wavelet_levels=cfg["denoise.levels"],
        wavelet_family=cfg["denoise.family"],
    )
    out_dir = cfgmod.default_out_dir(cfg["out_dir"], "preprocess")
    size = cfg["image_size"]
    kinds = ("spatiotemporal", "gasf", "stft")
    wrote_any = False
    for split in SPLITS:
        split_dir = signal_root / split
        if not split_dir.is_dir():
            continue
        wrote_any = True
        images = []
        for counter, raw in enumerate(load_split(split_dir)):
            record = SignalRecord(
                channels=raw.pixels[:, :, 0].astype(np.float64),
                sample_rate=sample_rate,
                label=raw.label,
            )
            if cfg["denoise.enabled"]:
                record = denoise_record(record, denoise_cfg)
            rep = kinds[counter % 3] if representation == "mixed" else representation
            if rep == "spatiotemporal":
                images.append(assemble_spatiotemporal(record, size, size))
            else:
                energies = (record.channels ** 2).mean(axis=1)
                series = record.channels[int(np.argmax(energies))]
                if rep == "gasf":
                    images.append(gasf_transform(series, size, label=record.label))
                else:
                    images.append(
                        stft_spectrogram(
                            series, sample_rate, cfg["stft.window"], cfg["stft.hop"], size,
                            label=record.label,
                        )
                    )
        write_split(out_dir / split, images)
    if not wrote_any:
        raise MissingInput(f"no split directories under {signal_root}")
    info_out = dict(info)
    info_out.update({"image_size": size, "representation": representation})
    (out_dir / "dataset.info").write_text(
        "\n".join(f"{k} = {v}" for k, v in info_out.items()) + "\n"
    )
    return out_dir


# -- pretrain -----------------------------------------------------------------

def _model_config(cfg: dict) -> ModelConfig:
    if cfg["model.preset"] == "vit_base":
        return vit_base_config(num_classes=cfg["model.classes"])
    if cfg["model.preset"] != "desk":
        raise BadConfig(f"unknown model preset {cfg['model.preset']!r}")
    return ModelConfig(
        image_size=cfg["model.image_size"],
        patch_size=cfg["model.patch"],
        d_model=cfg["model.d"],
        depth=cfg["model.depth"],
        n_heads=cfg["model.heads"],
        mlp_ratio=cfg["model.mlp_ratio"],
        num_classes=cfg["model.classes"],
    )


def _load_images(dataset_dir: Path, split: str) -> list[ImageSample]:
    split_dir = Path(dataset_dir) / split
    if not split_dir.is_dir():
        raise MissingInput(f"split directory not found: {split_dir}")
    return load_split(split_dir)


def _eval_patch_tensor(samples: list[ImageSample], model_cfg: ModelConfig) -> torch.Tensor:
    rows = []
    for sample in samples:
        prepared = augment_and_normalize(sample, False, out_size=model_cfg.image_size)
        rows.append(patchify(prepared, model_cfg.patch_size).patches)
    return torch.from_numpy(np.stack(rows).astype(np.float32))


def run_pretrain(cfg: dict) -> Path:
    _setup_torch()
    model_cfg = _model_config(cfg)
    model_cfg.validate()
    decoder_cfg = DecoderConfig(
        d_dec=cfg["decoder.d"], depth_dec=cfg["decoder.depth"], heads_dec=cfg["decoder.heads"]
    )
    decoder_cfg.validate()
    schedule = PretrainSchedule(
        epochs=cfg["schedule.epochs"],
        batch_size=cfg["schedule.batch"],
        lr=cfg["schedule.lr"],
        weight_decay=cfg["schedule.weight_decay"],
        warmup_frac=cfg["schedule.warmup_frac"],
        mask_ratio=cfg["mask_ratio"],
    )
    schedule.validate()
    samples = _load_images(Path(cfg["data"]), "train")
    patch_tensor = _eval_patch_tensor(samples, model_cfg)
    generator = torch.Generator().manual_seed(cfg["seed"])
    model = MaskedAutoencoder(model_cfg, decoder_cfg, generator=generator)
    out_dir = cfgmod.default_out_dir(cfg["out_dir"], "pretrain")
    out_dir.mkdir(parents=True, exist_ok=True)
    pretrain(model, patch_tensor, schedule, cfg["seed"], log_path=out_dir / "pretrain_log.csv")
    echo = cfgmod.canonical_text(cfg)
    save_checkpoint(out_dir / "encoder.ckpt", echo, module_params(model.encoder))
    if cfg["keep_decoder"]:
        save_checkpoint(out_dir / "mae_full.ckpt", echo, module_params(model))
    _write_info(out_dir, {"command": "pretrain", "epochs": schedule.epochs, "pool": len(samples)})
    return out_dir


# -- finetune -----------------------------------------------------------------

def _model_cfg_from_echo(echo: str) -> ModelConfig:
    raw = cfgmod.parse_config_text(echo, source="<checkpoint echo>")
    missing = [k for k in ("model.d", "model.depth") if k not in raw]
    if missing:
        raise BadConfig(f"checkpoint echo lacks model keys: {missing}")
    if raw.get("model.preset", "desk") == "vit_base":
        return vit_base_config(num_classes=int(raw["model.classes"]))
    return ModelConfig(
        image_size=int(raw["model.image_size"]),
        patch_size=int(raw["model.patch"]),
        d_model=int(raw["model.d"]),
        depth=int(raw["model.depth"]),
        n_heads=int(raw["model.heads"]),
        mlp_ratio=float(raw["model.mlp_ratio"]),
        num_classes=int(raw["model.classes"]),
    )


METHOD_TOKENS = {
    "fullfinetune": "FullFineTune",
    "linearprobe": "LinearProbe",
    "vpt": "VPT",
}


def _method_from_cfg(cfg: dict) -> FinetuneMethod:
    token = str(cfg["method"]).lower()
    if token not in METHOD_TOKENS:
        raise BadConfig(f"method must be one of {sorted(METHOD_TOKENS)}, got {cfg['method']!r}")
    kind = METHOD_TOKENS[token]
    if kind != "VPT":
        return FinetuneMethod(kind=kind)
    prompt_cfg = PromptConfig(
        variant=cfg["vpt.variant"],
        p=cfg["vpt.p"],
        strategy=cfg["vpt.strategy"],
        depth=cfg["vpt.depth"],
        carry_prompt_outputs=cfg["vpt.carry_prompt_outputs"],
    )
    return FinetuneMethod(kind="VPT", prompt_config=prompt_cfg)


def method_label(method: FinetuneMethod, n_layers: int) -> str:
    if method.kind != "VPT":
        return method.kind
    pc = method.prompt_config
    return (
        f"VPT-{pc.variant}(p={pc.p},{pc.strategy},depth={pc.resolved_depth(n_layers)})"
    )


def _build_from_checkpoint(
    checkpoint_path: Path, method: FinetuneMethod, seed: int
) -> tuple[VisionTransformer, PromptBank | None, ModelConfig, str]:
    echo, params = load_checkpoint(checkpoint_path)
    model_cfg = _model_cfg_from_echo(echo)
    model = VisionTransformer(model_cfg)
    load_module_params(model, params)
    bank = None
    if method.kind == "VPT":
        generator = torch.Generator().manual_seed(seed)
        bank = PromptBank(method.prompt_config, model_cfg.d_model, model_cfg.depth, generator)
    return model, bank, model_cfg, echo


def _check_labels(samples: list[ImageSample], num_classes: int, what: str) -> None:
    for sample in samples:
        if sample_label(sample) >= num_classes:
            raise LabelOutOfRange(
                f"{what} label {sample.label} outside 0..{num_classes - 1}"
            )


def _finetune_schedule(cfg: dict) -> FinetuneSchedule:
    return FinetuneSchedule(
        epochs=cfg["schedule.epochs"],
        batch_size=cfg["schedule.batch"],
        base_lr=cfg["schedule.base_lr"],
        weight_decay=cfg["schedule.weight_decay"],
        momentum=cfg["schedule.momentum"],
        augment=cfg["schedule.augment"],
    )


def finetune_run(
    cfg: dict,
    out_dir: Path,
    train_samples: list[ImageSample],
    val_samples: list[ImageSample],
    method: FinetuneMethod | None = None,
    schedule: FinetuneSchedule | None = None,
) -> tuple[VisionTransformer, PromptBank | None, FinetuneResult]:
    """One fine-tuning run from the pretrained checkpoint; saves artifacts."""
    method = method or _method_from_cfg(cfg)
    method.validate()
    schedule = schedule or _finetune_schedule(cfg)
    schedule.validate()
    model, bank, model_cfg, pre_echo = _build_from_checkpoint(
        Path(cfg["checkpoint"]), method, cfg["seed"]
    )
    if method.prompt_config is not None:
        method.prompt_config.validate(model_cfg.depth)
    _check_labels(train_samples, model_cfg.num_classes, "train")
    _check_labels(val_samples, model_cfg.num_classes, "val")
    result = finetune(
        model, bank, method, train_samples, val_samples, schedule, cfg["seed"], out_dir=out_dir
    )
    pre_raw = cfgmod.parse_config_text(pre_echo)
    echo_cfg = {k: v for k, v in cfg.items() if not k.startswith("grid.")}
    echo_cfg["schedule.base_lr"] = schedule.base_lr
    echo_cfg["schedule.weight_decay"] = schedule.weight_decay
    for key, value in pre_raw.items():
        if key.startswith(("model.", "decoder.")) or key == "mask_ratio":
            echo_cfg[key] = value
    params = module_params(model)
    if bank is not None:
        params.update(module_params(bank, prefix="bank."))
    save_checkpoint(Path(out_dir) / "finetuned.ckpt", cfgmod.canonical_text(echo_cfg), params)
    counted = count_trainable(method, model_cfg)
    _write_info(
        Path(out_dir),
        {
            "command": "finetune",
            "method": method_label(method, model_cfg.depth),
            "tuned_percent": counted.percent(),
            "best_epoch": result.best_epoch,
            "best_val_acc": repr(result.best_val_acc),
        },
    )
    return model, bank, result


def run_finetune(cfg: dict) -> Path:
    _setup_torch()
    out_dir = cfgmod.default_out_dir(cfg["out_dir"], "finetune")
    data_dir = Path(cfg["data"])
    train_samples = _load_images(data_dir, "train")
    val_samples = _load_images(data_dir, "val")
    method = _method_from_cfg(cfg)
    base_schedule = _finetune_schedule(cfg)
    if cfg["grid.base_lrs"] is not None or cfg["grid.weight_decays"] is not None:
        base_lrs = list(cfg["grid.base_lrs"] or (base_schedule.base_lr,))
        weight_decays = list(cfg["grid.weight_decays"] or (base_schedule.weight_decay,))

        def run_point(base_lr: float, wd: float) -> tuple[float, float]:
            sched = dataclasses.replace(base_schedule, base_lr=base_lr, weight_decay=wd)
            point_dir = out_dir / f"grid_lr{base_lr:g}_wd{wd:g}"
            _, _, res = finetune_run(
                cfg, point_dir, train_samples, val_samples, method=method, schedule=sched
            )
            return res.best_val_acc, res.wall_clock_s

        best_lr, best_wd, _ = grid_search(
            run_point, base_lrs, weight_decays, csv_path=out_dir / "grid.csv"
        )
        final_schedule = dataclasses.replace(
            base_schedule, base_lr=best_lr, weight_decay=best_wd
        )
    else:
        final_schedule = base_schedule
    finetune_run(
        cfg, out_dir, train_samples, val_samples, method=method, schedule=final_schedule
    )
    return out_dir


# -- eval ---------------------------------------------------------------------

def _method_from_echo(echo: str) -> FinetuneMethod:
    raw = cfgmod.parse_config_text(echo, source="<checkpoint echo>")
    token = raw.get("method", "vpt").lower()
    if token not in METHOD_TOKENS:
        raise BadConfig(f"checkpoint echo has unknown method {token!r}")
    if METHOD_TOKENS[token] != "VPT":
        return FinetuneMethod(kind=METHOD_TOKENS[token])
    depth = raw.get("vpt.depth")
    prompt_cfg = PromptConfig(
        variant=raw.get("vpt.variant", "deep"),
        p=int(raw.get("vpt.p", 30)),
        strategy=raw.get("vpt.strategy", "bottom_top"),
        depth=None if depth in (None, "None") else int(depth),
        carry_prompt_outputs=raw.get("vpt.carry_prompt_outputs", "False").lower()
        in ("true", "1", "yes"),
    )
    return FinetuneMethod(kind="VPT", prompt_config=prompt_cfg)


def run_eval(cfg: dict) -> Path:
    _setup_torch()
    echo, params = load_checkpoint(Path(cfg["checkpoint"]))
    method = _method_from_echo(echo)
    model_cfg = _model_cfg_from_echo(echo)
    model = VisionTransformer(model_cfg)
    load_module_params(model, params)
    bank = None
    if method.kind == "VPT":
        bank = PromptBank(method.prompt_config, model_cfg.d_model, model_cfg.depth)
        load_module_params(bank, params, prefix="bank.")
    samples = _load_images(Path(cfg["data"]), cfg["split"])
    _check_labels(samples, model_cfg.num_classes, cfg["split"])
    report = evaluate_model(model, bank, method, samples, batch_size=cfg["batch"])
    out_dir = cfgmod.default_out_dir(cfg["out_dir"], "eval")
    out_dir.mkdir(parents=True, exist_ok=True)
    wall = report.wall_clock_s
    write_metrics_csv(dataclasses.replace(report, wall_clock_s=None), out_dir)
    (out_dir / "timing.csv").write_text("phase,seconds\neval,%.3f\n" % wall)
    _write_info(
        out_dir,
        {
            "command": "eval",
            "method": method_label(method, model_cfg.depth),
            "tuned_percent": f"{100.0 * report.trainable_fraction:.3f}%",
            "split": cfg["split"],
        },
    )
    return out_dir


# -- sweeps -------------------------------------------------------------------

def _run_and_score(
    cfg: dict,
    run_dir: Path,
    method: FinetuneMethod,
    schedule: FinetuneSchedule,
    train_samples: list[ImageSample],
    val_samples: list[ImageSample],
    test_samples: list[ImageSample],
) -> dict:
    model, bank, result = finetune_run(
        cfg, run_dir, train_samples, val_samples, method=method, schedule=schedule
    )
    report = evaluate_model(model, bank, method, test_samples)
    write_metrics_csv(dataclasses.replace(report, wall_clock_s=None), run_dir)
    (run_dir / "timing.csv").write_text(
        "phase,seconds\nfinetune,%.3f\neval,%.3f\n" % (result.wall_clock_s, report.wall_clock_s)
    )
    return {
        "val_acc": result.best_val_acc,
        "test_acc": report.accuracy,
        "wall_clock_s": result.wall_clock_s,
    }


def _write_rows(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def sweep_prompt_count(cfg: dict, out_dir: Path) -> Path:
    data_dir = Path(cfg["data"])
    train_samples = _load_images(data_dir, "train")
    val_samples = _load_images(data_dir, "val")
    test_samples = _load_images(data_dir, cfg["sweep.split"])
    schedule = _finetune_schedule(cfg)
    p_values = sorted(cfg["sweep.p_values"])
    if not p_values or min(p_values) < 0:
        raise BadConfig("sweep.p_values must be non-empty, each >= 0")
    rows = []
    for p in p_values:
        prompt_cfg = PromptConfig(
            variant=cfg["vpt.variant"],
            p=p,
            strategy=cfg["vpt.strategy"],
            depth=cfg["vpt.depth"],
        )
        method = FinetuneMethod(kind="VPT", prompt_config=prompt_cfg)
        row = {"p": p, "val_acc": "", "test_acc": "", "trainable_count": "", "status": "ok"}
        try:
            scores = _run_and_score(
                cfg, out_dir / f"p_{p}", method, schedule,
                train_samples, val_samples, test_samples,
            )
            echo, _ = load_checkpoint(Path(cfg["checkpoint"]))
            counted = count_trainable(method, _model_cfg_from_echo(echo))
            row.update(
                val_acc=repr(scores["val_acc"]),
                test_acc=repr(scores["test_acc"]),
                trainable_count=counted.trainable_total,
            )
        except PromptDasError as exc:
            row["status"] = f"error:{type(exc).__name__}"
        rows.append(row)
    csv_path = out_dir / "sweep_prompt_count.csv"
    _write_rows(csv_path, ["p", "val_acc", "test_acc", "trainable_count", "status"], rows)
    return csv_path


def sweep_depth(cfg: dict, out_dir: Path) -> Path:
    data_dir = Path(cfg["data"])
    train_samples = _load_images(data_dir, "train")
    val_samples = _load_images(data_dir, "val")
    test_samples = _load_images(data_dir, cfg["sweep.split"])
    schedule = _finetune_schedule(cfg)
    echo, _ = load_checkpoint(Path(cfg["checkpoint"]))
    model_cfg = _model_cfg_from_echo(echo)
    depths = cfg["sweep.depths"] or tuple(range(1, model_cfg.depth + 1))
    strategies = cfg["sweep.strategies"]
    rows = []
    from .vpt import select_inserted_layers

    for strategy in strategies:
        for depth in depths:
            prompt_cfg = PromptConfig(
                variant="deep", p=cfg["vpt.p"], strategy=strategy, depth=depth
            )
            inserted = select_inserted_layers(prompt_cfg, model_cfg.depth)
            method = FinetuneMethod(kind="VPT", prompt_config=prompt_cfg)
            scores = _run_and_score(
                cfg, out_dir / f"{strategy}_depth{depth}", method, schedule,
                train_samples, val_samples, test_samples,
            )
            rows.append(
                {
                    "strategy": strategy,
                    "depth": depth,
                    "inserted_layers": "{" + ";".join(str(i) for i in inserted) + "}",
                    "test_acc": repr(scores["test_acc"]),
                }
            )
    csv_path = out_dir / "sweep_depth.csv"
    _write_rows(csv_path, ["strategy", "depth", "inserted_layers", "test_acc"], rows)
    return csv_path


def sweep_datasize(cfg: dict, out_dir: Path) -> Path:
    data_dir = Path(cfg["data"])
    train_samples = _load_images(data_dir, "train")
    val_samples = _load_images(data_dir, "val")
    test_samples = _load_images(data_dir, cfg["sweep.split"])
    schedule = _finetune_schedule(cfg)
    if not cfg["sweep.sizes"]:
        raise BadConfig("sweep.sizes is required for the datasize sweep")
    sizes = sorted(cfg["sweep.sizes"])
    echo, _ = load_checkpoint(Path(cfg["checkpoint"]))
    model_cfg = _model_cfg_from_echo(echo)
    labels = [sample_label(s) for s in train_samples]
    if max(sizes) > len(train_samples):
        raise InsufficientData(
            f"requested size {max(sizes)} exceeds train split of {len(train_samples)}"
        )
    methods = [
        FinetuneMethod(kind="FullFineTune"),
        FinetuneMethod(kind="LinearProbe"),
        _method_from_cfg({**cfg, "method": "vpt"}),
    ]
    rows = []
    out_dir.mkdir(parents=True, exist_ok=True)
    for size in sizes:
        indices = nested_subset_indices(labels, size, model_cfg.num_classes, cfg["seed"])
        subset = [train_samples[i] for i in indices]
        (out_dir / f"subset_{size}.txt").write_text(
            "\n".join(str(i) for i in indices) + "\n"
        )
        for method in methods:
            name = method.kind.lower() if method.kind != "VPT" else "vpt"
            scores = _run_and_score(
                cfg, out_dir / f"size{size}_{name}", method, schedule,
                subset, val_samples, test_samples,
            )
            rows.append(
                {
                    "size": size,
                    "method": method_label(method, model_cfg.depth),
                    "test_acc": repr(scores["test_acc"]),
                    "wall_clock_s": "%.3f" % scores["wall_clock_s"],
                }
            )
    csv_path = out_dir / "sweep_datasize.csv"
    _write_rows(csv_path, ["size", "method", "test_acc", "wall_clock_s"], rows)
    return csv_path


def run_sweep(cfg: dict) -> Path:
    _setup_torch()
    kind = cfg["kind"]
    out_dir = cfgmod.default_out_dir(cfg["out_dir"], f"sweep_{kind}")
    if kind == "prompt_count":
        sweep_prompt_count(cfg, out_dir)
    elif kind == "depth":
        sweep_depth(cfg, out_dir)
    elif kind == "datasize":
        sweep_datasize(cfg, out_dir)
    else:
        raise BadConfig(f"sweep kind must be prompt_count, depth or datasize, got {kind!r}")
    return out_dir


# -- report -------------------------------------------------------------------

def _read_timing(path: Path) -> dict[str, float]:
    timings = {}
    if path.is_file():
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for row in reader:
                if len(row) == 2:
                    timings[row[0]] = float(row[1])
    return timings


def run_report(cfg: dict) -> Path:
    in_dir = Path(cfg["input"])
    if not in_dir.is_dir():
        raise NoRunsFound(f"report input directory not found: {in_dir}")
    metric_files = sorted(in_dir.rglob(METRICS_FILENAME))
    if not metric_files:
        raise NoRunsFound(f"no {METRICS_FILENAME} files under {in_dir}")
    rows = []
    for path in metric_files:
        report = read_metrics_csv(path)
        info = _read_info_file(path.parent / "run.info")
        timings = _read_timing(path.parent / "timing.csv")
        rows.append(
            {
                "run": str(path.parent.relative_to(in_dir)) or ".",
                "method": info.get("method", "unknown"),
                "tuned_params_pct": f"{100.0 * report.trainable_fraction:.3f}%",
                "train_time_s": (
                    "%.3f" % timings["finetune"] if "finetune" in timings else ""
                ),
                "accuracy": repr(report.accuracy),
            }
        )
    out_dir = cfgmod.default_out_dir(cfg["out_dir"] or str(in_dir), "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    fields = ["run", "method", "tuned_params_pct", "train_time_s", "accuracy"]
    _write_rows(out_dir / "comparison.csv", fields, rows)
    widths = {f: max(len(f), *(len(str(r[f])) for r in rows)) for f in fields}
    lines = ["  ".join(f.ljust(widths[f]) for f in fields)]
    lines.append("  ".join("-" * widths[f] for f in fields))
    for row in rows:
        lines.append("  ".join(str(row[f]).ljust(widths[f]) for f in fields))
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    return out_dir
