"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 configuration, 3 data, 4 numeric failure.
Configuration is validated in full before any artifact is written, so a typo
in a key never leaves a half-built run directory behind.
"""

from __future__ import annotations

import sys

from . import config as cfgmod
from . import harness
from .errors import PromptDasError

USAGE = """\
usage: prompt-das <command> [--config PATH] [--set key=value]...

commands:
  synth       generate a labeled synthetic dataset from a scenario spec
  preprocess  denoise raw signals and render representation images
  pretrain    masked-autoencoder pretraining of the encoder
  finetune    fine-tune from a pretrained checkpoint (fullfinetune|linearprobe|vpt)
  eval        evaluate a fine-tuned checkpoint on a split
  sweep       run an ablation sweep (prompt_count|depth|datasize)
  report      aggregate run metrics into a comparison table
"""

COMMANDS = {
    "synth": harness.run_synth,
    "preprocess": harness.run_preprocess,
    "pretrain": harness.run_pretrain,
    "finetune": harness.run_finetune,
    "eval": harness.run_eval,
    "sweep": harness.run_sweep,
    "report": harness.run_report,
}


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    print(USAGE, file=sys.stderr, end="")
    return 1


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE, end="")
        return 0 if argv else 1
    command = argv.pop(0)
    if command not in COMMANDS:
        return _usage_error(f"unknown command {command!r}")
    config_path = None
    overrides: dict[str, str] = {}
    while argv:
        flag = argv.pop(0)
        if flag == "--config":
            if not argv:
                return _usage_error("--config needs a path argument")
            config_path = argv.pop(0)
        elif flag == "--set":
            if not argv:
                return _usage_error("--set needs a key=value argument")
            assignment = argv.pop(0)
            if "=" not in assignment:
                return _usage_error(f"--set expects key=value, got {assignment!r}")
            key, value = assignment.split("=", 1)
            overrides[key.strip()] = value.strip()
        else:
            return _usage_error(f"unknown argument {flag!r}")
    try:
        raw = cfgmod.read_config_file(config_path) if config_path else {}
        resolved = cfgmod.resolve(command, raw, overrides)
        out = COMMANDS[command](resolved)
        print(out)
        return 0
    except PromptDasError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
