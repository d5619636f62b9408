"""
``ssm-mil`` command line.

Exit codes: 0 on success, 1 when a documented pre-condition fails, 2 on
I/O or parse errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch

from src.constants.common_constants import ExitCodes, Splits
from src.data.storage import load_dataset, save_dataset
from src.data.synthetic import BagSpec, Dataset, generate_dataset
from src.errors import ContractViolation, DataFormatError, TrainingDivergedError
from src.evaluation.analysis import analyze_anchor, analyze_decay, analyze_locality, write_csv
from src.evaluation.experiments import ablate, evaluate
from src.mil.config import ModelConfig
from src.mil.model import prepare_bag
from src.mil.training import load_trained, load_validation_ids, save_trained, train, validation_bags
from src.scanning.grid import tissue_ratio
from src.settings import RuntimeSettings

logger = logging.getLogger(__name__)

DEFAULT_LOCALITY_SAMPLE = 8


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssm-mil", description="Selective-scan multiple instance learning")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="Generate a synthetic dataset directory")
    generate.add_argument("--spec", type=Path, help="key = value bag spec file (defaults when omitted)")
    generate.add_argument("--out", type=Path, required=True)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--n", type=int, required=True, help="bags per class")

    train_cmd = commands.add_parser("train", help="Train a model and write a checkpoint")
    train_cmd.add_argument("--data", type=Path, required=True)
    train_cmd.add_argument("--config", type=Path, help="key = value model config (desk defaults when omitted)")
    train_cmd.add_argument("--out", type=Path, required=True)
    train_cmd.add_argument("--seed", type=int)

    eval_cmd = commands.add_parser("eval", help="Evaluate a checkpoint on one split")
    eval_cmd.add_argument("--data", type=Path, required=True)
    eval_cmd.add_argument("--ckpt", type=Path, required=True)
    eval_cmd.add_argument("--split", choices=Splits.EVAL_CHOICES, default=Splits.TEST)
    eval_cmd.add_argument("--report", type=Path, required=True)

    ablate_cmd = commands.add_parser("ablate", help="Train and evaluate over a parameter grid")
    ablate_cmd.add_argument("--data", type=Path, required=True)
    ablate_cmd.add_argument("--config", type=Path)
    ablate_cmd.add_argument("--grid", required=True, help="r=..., baseline=... or overlap=on,off")
    ablate_cmd.add_argument("--seeds", type=_int_list, default=[0])
    ablate_cmd.add_argument("--jobs", type=int)
    ablate_cmd.add_argument("--report", type=Path, required=True)

    decay = commands.add_parser("analyze-decay", help="Decay factor versus token distance")
    decay.add_argument("--ckpt", type=Path, required=True)
    decay.add_argument("--data", type=Path, required=True)
    decay.add_argument("--cts", type=_on_off, default=False)
    decay.add_argument("--bag", help="bag id (first test bag when omitted)")
    decay.add_argument("--out", type=Path, required=True)

    anchor = commands.add_parser("analyze-anchor", help="Cosine scores against one anchor token")
    anchor.add_argument("--data", type=Path, required=True)
    anchor.add_argument("--bag", required=True)
    anchor.add_argument("--anchor", type=int, required=True)
    anchor.add_argument("--out", type=Path, required=True)

    locality = commands.add_parser("analyze-locality", help="Per-channel locality and top-K membership")
    locality.add_argument("--ckpt", type=Path, required=True)
    locality.add_argument("--data", type=Path, required=True)
    locality.add_argument("--k", type=_int_list, default=[0, 1, 2, 4, 8])
    locality.add_argument("--out", type=Path, required=True)
    return parser


def _log_tissue_ratios(dataset: Dataset) -> None:
    ratios = np.array([tissue_ratio(bag.index) for bag in dataset.bags])
    logger.info(
        "Tissue ratio over %d bags: min %.3f, mean %.3f, max %.3f",
        ratios.size,
        ratios.min(),
        ratios.mean(),
        ratios.max(),
    )


def _run_generate(args, settings: RuntimeSettings) -> None:
    spec = BagSpec.from_file(args.spec) if args.spec is not None else BagSpec()
    dataset = generate_dataset(spec, args.n, args.seed)
    _log_tissue_ratios(dataset)
    save_dataset(dataset, args.out)


def _run_train(args, settings: RuntimeSettings) -> None:
    config = ModelConfig.from_file(args.config) if args.config is not None else ModelConfig.desk()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    dataset = load_dataset(args.data)
    result = train(dataset, config)
    save_trained(result.model, config, args.out, result.history, result.validation_ids)


def _run_eval(args, settings: RuntimeSettings) -> None:
    model, config = load_trained(args.ckpt)
    dataset = load_dataset(args.data)
    if args.split == Splits.VALIDATION:
        expected = load_validation_ids(args.ckpt)
        derived = [bag.bag_id for bag in validation_bags(dataset, config)]
        if derived != expected:
            raise ContractViolation(
                f"validation subset of {args.data} ({derived}) differs from the one recorded with the checkpoint ({expected})"
            )
    report = evaluate(model, dataset, args.split, config)
    write_csv(args.report, ("metric", "value"), report.rows())


def _run_ablate(args, settings: RuntimeSettings) -> None:
    config = ModelConfig.from_file(args.config) if args.config is not None else ModelConfig.desk()
    jobs = args.jobs if args.jobs is not None else settings.jobs
    if jobs < 1:
        raise ContractViolation(f"--jobs must be >= 1, got {jobs}")
    ablate(args.data, config, args.grid, args.seeds, jobs, settings.torch_threads, args.report)


def _run_analyze_decay(args, settings: RuntimeSettings) -> None:
    model, config = load_trained(args.ckpt)
    dataset = load_dataset(args.data)
    _log_tissue_ratios(dataset)
    if args.bag is not None:
        bag = dataset.bag(args.bag)
    else:
        test_bags = dataset.split(Splits.TEST) or dataset.bags
        bag = test_bags[0]
    analyze_decay(model, prepare_bag(bag, config.overlap), args.cts, args.out)


def _run_analyze_anchor(args, settings: RuntimeSettings) -> None:
    dataset = load_dataset(args.data)
    analyze_anchor(dataset.bag(args.bag), args.anchor, args.out)


def _run_analyze_locality(args, settings: RuntimeSettings) -> None:
    model, config = load_trained(args.ckpt)
    dataset = load_dataset(args.data)
    sample = (dataset.split(Splits.TEST) or dataset.bags)[:DEFAULT_LOCALITY_SAMPLE]
    analyze_locality(model, [prepare_bag(bag, config.overlap) for bag in sample], args.k, args.out)


_COMMANDS = {
    "generate": _run_generate,
    "train": _run_train,
    "eval": _run_eval,
    "ablate": _run_ablate,
    "analyze-decay": _run_analyze_decay,
    "analyze-anchor": _run_analyze_anchor,
    "analyze-locality": _run_analyze_locality,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = RuntimeSettings.from_env()
    except ValueError as exc:
        logging.basicConfig()
        logger.error("%s", exc)
        return ExitCodes.CONTRACT_VIOLATION
    settings.configure_logging()
    torch.set_num_threads(settings.torch_threads)
    try:
        _COMMANDS[args.command](args, settings)
    except (ContractViolation, TrainingDivergedError) as exc:
        logger.error("%s", exc)
        return ExitCodes.CONTRACT_VIOLATION
    except (DataFormatError, OSError, json.JSONDecodeError) as exc:
        logger.error("%s", exc)
        return ExitCodes.IO_ERROR
    return ExitCodes.OK


if __name__ == "__main__":
    sys.exit(main())
