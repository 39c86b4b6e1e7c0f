"""Command-line entry points: run, replay, verify-frame, export, oracle-serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agents import AgentSettings, CandidateFrame, gate
from .errors import ManifestMissing, ProtocolError, WorldLoomError
from .geometry import CameraPose, PerturbationBounds, rot_y
from .imaging import area_resize, decode_png, encode_png, nearest_resize
from .manifest import load_events, load_manifest
from .metrics import format_metric_table
from .oracle import OracleConfig, OracleRole, ScriptedVlm, oracle_backends
from .orchestrator import Orchestrator, RunConfig, exit_code_for
from .protocol import BackendEndpoints, BackendSet, build_http_backends
from .server import WireServer
from .world import Budgets

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_TRY_BUDGET = 2
EXIT_FAILURE = 3
EXIT_USAGE = 64

ENV_HELP = (
    "Environment variables: WORLDLOOM_TOKEN (bearer token sent to HTTP backends), "
    "WORLDLOOM_TIMEOUT_SECS (per-call timeout, default 60)."
)


def _parse_budgets(text: str) -> Budgets:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError("budgets must be N,R,r")
    return Budgets(max_frames=parts[0], max_tries=parts[1], per_step_retries=parts[2])


def _parse_pose(text: str) -> CameraPose:
    values = [float(v) for v in text.replace(",", " ").split()]
    return CameraPose.from_flat(values)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _endpoints_from(cfg: dict, base_url: str | None) -> BackendEndpoints | None:
    if base_url:
        return BackendEndpoints.from_env(
            generator_url=base_url,
            vlm_url=base_url,
            reconstructor_url=base_url,
            lpips_url=cfg.get("lpips_url"),
        )
    if cfg.get("generator_url"):
        return BackendEndpoints.from_env(
            generator_url=cfg["generator_url"],
            vlm_url=cfg.get("vlm_url", cfg["generator_url"]),
            reconstructor_url=cfg.get("reconstructor_url", cfg["generator_url"]),
            lpips_url=cfg.get("lpips_url"),
            timeout=float(cfg.get("timeout", 60.0)),
            max_transport_retries=int(cfg.get("max_transport_retries", 2)),
        )
    return None


def _build_run_config(args) -> RunConfig:
    cfg = _load_config_file(args.config)
    # CLI flags override file values
    prompt = args.prompt or cfg.get("global_prompt")
    if not prompt:
        raise ValueError("a prompt is required (--prompt or config global_prompt)")
    out_dir = args.out or cfg.get("out_dir")
    if not out_dir:
        raise ValueError("an output directory is required (--out or config out_dir)")

    if args.budgets:
        budgets = _parse_budgets(args.budgets)
    else:
        budgets = Budgets(
            max_frames=int(cfg.get("max_frames", 14)),
            max_tries=int(cfg.get("max_tries", 28)),
            per_step_retries=int(cfg.get("per_step_retries", 2)),
        )
    bounds = PerturbationBounds(
        max_translation=float(cfg.get("max_translation", 0.05)),
        max_yaw_jitter=float(cfg.get("max_yaw_jitter", 3.0)),
        max_pitch_jitter=float(cfg.get("max_pitch_jitter", 2.0)),
    )
    oracle_seed = args.scene_seed if args.oracle else cfg.get("oracle_scene_seed")
    endpoints = _endpoints_from(cfg, getattr(args, "endpoints", None))
    return RunConfig(
        global_prompt=prompt,
        out_dir=Path(out_dir),
        budgets=budgets,
        yaw_degrees=args.yaw if args.yaw is not None else float(cfg.get("yaw_degrees", 20.0)),
        bounds=bounds,
        working_resolution=int(args.resolution or cfg.get("working_resolution", 512)),
        recon_resolution=int(args.recon_resolution or cfg.get("recon_resolution", 448)),
        fov_degrees=float(cfg.get("fov_degrees", 60.0)),
        seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
        verifier_mode=args.verifier_mode or cfg.get("verifier_mode", "threshold"),
        endpoints=endpoints,
        oracle_scene_seed=oracle_seed,
        log_rejected_images=bool(cfg.get("log_rejected_images", False)),
    )


def _progress_printer(event: dict) -> None:
    kind = event.get("kind")
    if kind == "try":
        print(
            f"try={event['try']} step={event['step']} direction={event['direction']} "
            f"verdict={event.get('verdict', '?')}"
            + (f" reason={event['reason']!r}" if event.get("reason") else "")
        )
    elif kind == "director":
        decision = event.get("decision", "error")
        print(f"director step={event.get('step')} decision={decision}")
    elif kind == "bootstrap":
        print(f"try={event['try']} step=1 verdict=bootstrap")
    elif kind == "stop":
        print(f"stop reason={event['reason']}")


# --- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        config = _build_run_config(args)
        if config.oracle_scene_seed is None and config.endpoints is None:
            raise ValueError("provide --oracle or backend endpoints")
        orch = Orchestrator(config)
    except (ValueError, WorldLoomError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    orch.on_event = _progress_printer
    _, report = orch.run()
    print(
        f"done frames={report.accepted_count} tries={report.tries_used} "
        f"stop={report.stop_reason} out={config.out_dir}"
    )
    return exit_code_for(report)


def cmd_replay(args) -> int:
    """Re-validate a saved run: frame hashes, budgets, and the event log."""
    try:
        world = load_manifest(args.manifest)
        events = load_events(args.manifest)
    except (ManifestMissing, WorldLoomError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    tries_seen = sum(1 for e in events if e.get("kind") in ("bootstrap", "try"))
    for event in events:
        _progress_printer(event)
    print(
        f"replay frames={len(world.frames)} tries_used={world.budgets.tries_used} "
        f"events={len(events)}"
    )
    if tries_seen != world.budgets.tries_used:
        print(
            f"error: event log shows {tries_seen} tries but budgets record "
            f"{world.budgets.tries_used}",
            file=sys.stderr,
        )
        return EXIT_FAILURE
    return EXIT_OK


def _verify_backends(args, world) -> BackendSet:
    cfg = _load_config_file(args.config)
    oracle_seed = args.scene_seed if args.oracle else cfg.get("oracle_scene_seed")
    if oracle_seed is not None:
        config = OracleConfig(
            working_resolution=world.working_resolution,
            recon_resolution=args.recon_resolution or int(cfg.get("recon_resolution", 448)),
        )
        return oracle_backends(oracle_seed, config)
    endpoints = _endpoints_from(cfg, getattr(args, "endpoints", None))
    if endpoints is None:
        raise ValueError("provide --oracle or backend endpoints")
    backends = build_http_backends(
        endpoints, world.working_resolution, args.recon_resolution or 448
    )
    if args.mode == "threshold":
        backends.vlm = ScriptedVlm()
    return backends


def cmd_verify_frame(args) -> int:
    try:
        world = load_manifest(args.manifest)
        pose = _parse_pose(args.pose)
        candidate_img = decode_png(Path(args.candidate).read_bytes())
        backends = _verify_backends(args, world)
    except (ValueError, WorldLoomError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    settings = AgentSettings(
        working_resolution=world.working_resolution,
        recon_resolution=args.recon_resolution or 448,
    )
    frames_small = [
        (area_resize(f.image, settings.recon_resolution), f.pose) for f in world.frames
    ]
    warp_small, mask_small = backends.reconstructor.reconstruct_render(
        frames_small, [pose]
    )[0]
    warp = nearest_resize(warp_small, world.working_resolution)
    mask = nearest_resize(mask_small, world.working_resolution)
    candidate = CandidateFrame(
        image=candidate_img,
        pose=pose,
        prompt=args.prompt or "standalone verification",
        warp_image=warp,
        warp_mask=mask,
        try_number=0,
    )
    verdict = gate(candidate, world, backends, settings, force_both=args.force_both)
    print(f"v2d={'accept' if verdict.v2d.accepted else 'reject'} reason={verdict.v2d.reason!r}")
    if verdict.v3d is not None:
        print(f"v3d={'accept' if verdict.v3d.accepted else 'reject'} reason={verdict.v3d.reason!r}")
        print(format_metric_table(verdict.profile))
    print(f"final={'accept' if verdict.final else 'reject'}")
    return EXIT_OK if verdict.final else EXIT_REJECTED


def cmd_export(args) -> int:
    try:
        world = load_manifest(args.manifest)
        if not world.frames:
            raise ValueError("manifest holds no frames")
        backends = _verify_backends(args, world)
        if args.poses:
            poses = [
                CameraPose.from_flat(row)
                for row in json.loads(Path(args.poses).read_text(encoding="utf-8"))
            ]
        else:
            poses = [
                CameraPose(rot_y(-360.0 * k / args.orbit)) for k in range(args.orbit)
            ]
    except (ValueError, WorldLoomError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    recon_res = args.recon_resolution or 448
    frames_small = [(area_resize(f.image, recon_res), f.pose) for f in world.frames]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        renders = backends.reconstructor.reconstruct_render(frames_small, poses)
    except ProtocolError as exc:
        print(f"error: reconstructor failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for i, (img, _mask) in enumerate(renders, start=1):
        (out_dir / f"render_{i:04d}.png").write_bytes(encode_png(img))
    print(f"exported {len(renders)} renders to {out_dir}")
    return EXIT_OK


def cmd_oracle_serve(args) -> int:
    role_map = {
        "PerfectGenerator": OracleRole.PERFECT_GENERATOR,
        "LazyGenerator": OracleRole.LAZY_GENERATOR,
        "DriftingGenerator": OracleRole.DRIFTING_GENERATOR,
        "Reconstructor": OracleRole.RECONSTRUCTOR,
        "ScriptedVLM": OracleRole.SCRIPTED_VLM,
    }
    config = OracleConfig(
        working_resolution=args.resolution or 512,
        recon_resolution=args.recon_resolution or 448,
    )
    if args.role == "all":
        backends = oracle_backends(args.scene_seed, config)
        roles = None
    else:
        backends = oracle_backends(
            args.scene_seed,
            config,
            generator_role=role_map.get(args.role, OracleRole.PERFECT_GENERATOR),
        )
        roles = {
            "PerfectGenerator": ("generator",),
            "LazyGenerator": ("generator",),
            "DriftingGenerator": ("generator",),
            "Reconstructor": ("reconstructor",),
            "ScriptedVLM": ("vlm",),
        }[args.role]
    try:
        server = WireServer(backends, port=args.port, roles=roles)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"oracle serving {args.role} on {server.url} (scene seed {args.scene_seed})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
        server.stop()
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="worldloom",
        description="Agentic iterative 3D world generation.",
        epilog=ENV_HELP,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="generate a scene", epilog=ENV_HELP)
    p_run.add_argument("--prompt", help="global scene prompt")
    p_run.add_argument("--config", help="flat JSON config file; flags override it")
    p_run.add_argument("--out", help="output/manifest directory")
    p_run.add_argument("--seed", type=int, default=None, help="run seed")
    p_run.add_argument("--oracle", action="store_true", help="use the built-in synthetic oracle")
    p_run.add_argument("--scene-seed", type=int, default=0, help="oracle scene seed")
    p_run.add_argument("--endpoints", help="base URL serving all backend endpoints")
    p_run.add_argument("--budgets", help="N,R,r: frames, total tries, per-step retries")
    p_run.add_argument("--yaw", type=float, default=None, help="fixed yaw per step, degrees")
    p_run.add_argument("--resolution", type=int, default=None, help="working resolution")
    p_run.add_argument("--recon-resolution", type=int, default=None, help="reconstructor resolution")
    p_run.add_argument("--verifier-mode", choices=["vlm", "threshold"], default=None)
    p_run.set_defaults(func=cmd_run)

    p_replay = sub.add_parser("replay", help="re-validate and print a saved run")
    p_replay.add_argument("--manifest", required=True, help="manifest directory")
    p_replay.set_defaults(func=cmd_replay)

    p_verify = sub.add_parser("verify-frame", help="gate a standalone candidate frame")
    p_verify.add_argument("--manifest", required=True, help="manifest directory")
    p_verify.add_argument("--candidate", required=True, help="candidate PNG path")
    p_verify.add_argument("--pose", required=True, help="16 numbers, row-major camera-to-world")
    p_verify.add_argument("--mode", choices=["threshold", "vlm"], default="threshold")
    p_verify.add_argument("--prompt", help="view prompt used for the candidate")
    p_verify.add_argument("--config", help="flat JSON config file")
    p_verify.add_argument("--oracle", action="store_true")
    p_verify.add_argument("--scene-seed", type=int, default=0)
    p_verify.add_argument("--endpoints")
    p_verify.add_argument("--recon-resolution", type=int, default=None)
    p_verify.add_argument("--force-both", action="store_true", help="evaluate 3D even if 2D rejects")
    p_verify.set_defaults(func=cmd_verify_frame)

    p_export = sub.add_parser("export", help="render novel views from a manifest")
    p_export.add_argument("--manifest", required=True)
    p_export.add_argument("--out", required=True)
    group = p_export.add_mutually_exclusive_group(required=True)
    group.add_argument("--poses", help="JSON file: list of 16-number pose rows")
    group.add_argument("--orbit", type=int, help="render N poses on a full yaw orbit")
    p_export.add_argument("--config", help="flat JSON config file")
    p_export.add_argument("--oracle", action="store_true")
    p_export.add_argument("--scene-seed", type=int, default=0)
    p_export.add_argument("--endpoints")
    p_export.add_argument("--recon-resolution", type=int, default=None)
    p_export.add_argument("--mode", choices=["threshold", "vlm"], default="threshold")
    p_export.set_defaults(func=cmd_export)

    p_serve = sub.add_parser("oracle-serve", help="serve oracle backends over HTTP")
    p_serve.add_argument("--port", type=int, default=8341)
    p_serve.add_argument("--scene-seed", type=int, default=0)
    p_serve.add_argument(
        "--role",
        default="all",
        choices=["all", "PerfectGenerator", "LazyGenerator", "DriftingGenerator",
                 "Reconstructor", "ScriptedVLM"],
    )
    p_serve.add_argument("--resolution", type=int, default=None)
    p_serve.add_argument("--recon-resolution", type=int, default=None)
    p_serve.set_defaults(func=cmd_oracle_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract here is 64
        if exc.code not in (0, None):
            return EXIT_USAGE
        return 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
