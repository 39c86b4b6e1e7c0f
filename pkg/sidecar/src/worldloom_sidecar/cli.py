"""Sidecar entry points: serve a role, or run golden conformance."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ADAPTERS, ROLES, SidecarConfig
from .conformance import conformance


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="worldloom-sidecar")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_serve = sub.add_parser("serve", help="serve one backend role")
    p_serve.add_argument("--port", type=int, default=8600)
    p_serve.add_argument("--role", choices=ROLES, default="generator")
    p_serve.add_argument("--adapter", choices=ADAPTERS, default="echo-stub")
    p_serve.add_argument("--fixture-dir", type=Path, default=None)
    p_serve.add_argument("--command", dest="external_command", nargs=argparse.REMAINDER,
                         default=None,
                         help="external-command argv (everything after this flag)")
    p_serve.add_argument("--resolution", type=int, default=512)
    p_serve.add_argument("--guidance-scale", type=float, default=1.0)
    p_serve.add_argument("--num-inference-steps", type=int, default=4)

    p_conf = sub.add_parser("conformance", help="replay golden fixtures against the stubs")
    p_conf.add_argument("--golden", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.subcommand == "serve":
        config = SidecarConfig(
            port=args.port,
            role=args.role,
            adapter=args.adapter,
            fixture_dir=args.fixture_dir,
            command=args.external_command,
            resolution=args.resolution,
            guidance_scale=args.guidance_scale,
            num_inference_steps=args.num_inference_steps,
        )
        from .service import serve

        serve(config)
        return 0
    report = conformance(args.golden)
    for line in report.summary_lines():
        print(line)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
