# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Command-line entry point.

Every subcommand calls one ``logic_*`` function and prints its result as
JSON on stdout. Logs go to stderr. The exit code is 0 on success, 1 on a
handled error and 2 on invalid arguments.
"""

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from typing import Any

from poseflow._version import __version__
from poseflow.config import APOSE_ANGLES_DEG
from poseflow.tools import (
    logic_ablate_cfg,
    logic_ablate_pose_repr,
    logic_apose_sweep,
    logic_eval,
    logic_gen_data,
    logic_info,
    logic_plot,
    logic_sample,
    logic_train_flow,
    logic_train_vae,
)

logger = logging.getLogger(__name__)


def _gen_data(args: argparse.Namespace) -> dict[str, Any]:
    return logic_gen_data(args.config, args.out, seed=args.seed, workers=args.workers)  # type: ignore[return-value]


def _train_vae(args: argparse.Namespace) -> dict[str, Any]:
    return logic_train_vae(args.config, args.data, args.out)  # type: ignore[return-value]


def _train_flow(args: argparse.Namespace) -> dict[str, Any]:
    return logic_train_flow(args.config, args.data, args.vae, args.out)  # type: ignore[return-value]


def _sample(args: argparse.Namespace) -> dict[str, Any]:
    return logic_sample(  # type: ignore[return-value]
        args.ckpt, args.vae, args.input, args.out,
        guidance=args.guidance, steps=args.steps, seed=args.seed,
        scheme=args.scheme, grid_res=args.grid_res,
    )


def _eval(args: argparse.Namespace) -> dict[str, Any]:
    return logic_eval(args.gt, args.gen, args.out, tau=args.tau, n_points=args.n_points)  # type: ignore[return-value]


def _ablate_pose_repr(args: argparse.Namespace) -> dict[str, Any]:
    return logic_ablate_pose_repr(args.config, args.data, args.vae, args.out, n_eval=args.n_eval)  # type: ignore[return-value]


def _ablate_cfg(args: argparse.Namespace) -> dict[str, Any]:
    return logic_ablate_cfg(args.ckpt, args.vae, args.data, args.out, n_eval=args.n_eval)  # type: ignore[return-value]


def _apose_sweep(args: argparse.Namespace) -> dict[str, Any]:
    return logic_apose_sweep(  # type: ignore[return-value]
        args.ckpt, args.vae, args.data, args.out,
        angles=tuple(args.angles), n_identities=args.n_identities,
    )


def _plot(args: argparse.Namespace) -> dict[str, Any]:
    return logic_plot(args.out, sample=args.sample, metrics=args.metrics or ())  # type: ignore[return-value]


def _info(args: argparse.Namespace) -> dict[str, Any]:
    return logic_info(args.config)  # type: ignore[return-value]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poseflow",
        description="Skeleton-conditioned shape generation with rectified flow.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="stderr log verbosity (default: INFO)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def command(
        name: str, handler: Callable[[argparse.Namespace], dict[str, Any]], text: str
    ) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=text, description=text)
        p.set_defaults(handler=handler)
        return p

    p = command("gen-data", _gen_data, "Generate the synthetic character pair dataset.")
    p.add_argument("--config", help="experiment config JSON (default: desk preset)")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, help="root seed, overrides the config")
    p.add_argument("--workers", type=int, help="generation processes, overrides the config")

    p = command("train-vae", _train_vae, "Train the shape autoencoder.")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="checkpoint directory")

    p = command("train-flow", _train_flow, "Train the condition encoders and flow transformer.")
    p.add_argument("--data", required=True)
    p.add_argument("--vae", required=True, help="VAE checkpoint directory")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="checkpoint directory")

    p = command("sample", _sample, "Generate shapes for dataset pairs or raster and skeleton files.")
    p.add_argument("--ckpt", required=True, help="flow checkpoint directory")
    p.add_argument("--vae", required=True, help="VAE checkpoint directory")
    p.add_argument(
        "--input",
        required=True,
        help="pair:<dataset>:<index|test|all> or files:<raster.npy>:<skeleton.json>",
    )
    p.add_argument("--guidance", help="image-only:s, frozen-pose:s, independent:w1,w2,w3,w4 or preset:A|B|eq7")
    p.add_argument("--steps", type=int)
    p.add_argument("--scheme", choices=["euler", "heun"])
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-res", type=int)
    p.add_argument("--out", required=True)

    p = command("eval", _eval, "Score sampled contours against ground-truth surfaces.")
    p.add_argument("--gt", required=True, help="dataset directory")
    p.add_argument("--gen", required=True, help="sample output directory")
    p.add_argument("--tau", type=float)
    p.add_argument("--n-points", type=int)
    p.add_argument("--out", required=True, help="report JSON path")

    p = command("ablate-pose-repr", _ablate_pose_repr, "Compare bone and joint pose tokens.")
    p.add_argument("--data", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--config")
    p.add_argument("--n-eval", type=int)
    p.add_argument("--out", required=True)

    p = command("ablate-cfg", _ablate_cfg, "Compare frozen-pose guidance with the independent presets.")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-eval", type=int)
    p.add_argument("--out", required=True)

    p = command("apose-sweep", _apose_sweep, "Generate held-out identities in the A-pose at several arm angles.")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--angles", type=float, nargs="+", default=list(APOSE_ANGLES_DEG))
    p.add_argument("--n-identities", type=int)
    p.add_argument("--out", required=True)

    p = command("plot", _plot, "Render sample overlays and loss curves as SVG.")
    p.add_argument("--sample", help="sample output directory")
    p.add_argument("--metrics", nargs="+", help="metrics.jsonl files")
    p.add_argument("--out", required=True)

    p = command("info", _info, "Report versions, platform, memory and model sizes.")
    p.add_argument("--config")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point for the poseflow CLI command."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logger.debug("running %s", args.command)
    result = args.handler(args)
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0 if result.get("status") == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
