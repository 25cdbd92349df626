"""Command-line driver for the real-to-sim workflow.

Subcommands: align, transform, crop, compose, render, tsdf-fuse,
mesh-extract, metrics, fit, rollout, serve. All fail with exit code 1
and a diagnostic on stderr; argparse usage errors exit 2.
"""

import argparse
import json
import sys
from pathlib import Path


def _load_config_document(path):
    path = Path(path)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(path.read_text())
    return json.loads(path.read_text())


def cmd_align(args):
    from .files import correspondences_from_json, points_from_json, transform_to_json
    from .transforms import fit_similarity

    if args.pairs:
        src, dst = correspondences_from_json(args.pairs)
    else:
        src = points_from_json(args.src)
        dst = points_from_json(args.dst)
    transform, residual = fit_similarity(src, dst)
    result = transform_to_json(transform)
    result["rotation_matrix"] = transform.rotation.tolist()
    result["rms_residual"] = residual
    print(json.dumps(result, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2))
    return 0


def cmd_transform(args):
    from .files import transform_from_json
    from .ply import load_ply, save_ply
    from .transforms import transform_scene

    scene = load_ply(Path(args.scene).read_bytes())
    transform = transform_from_json(args.transform)
    Path(args.out).write_bytes(save_ply(transform_scene(scene, transform)))
    print(f"transformed {len(scene)} splats -> {args.out}")
    return 0


def cmd_crop(args):
    from .compose import crop_by_obb
    from .files import obb_from_json
    from .ply import load_ply, save_ply

    scene = load_ply(Path(args.scene).read_bytes())
    inside, outside = crop_by_obb(scene, obb_from_json(args.obb))
    Path(args.inside).write_bytes(save_ply(inside))
    if args.outside:
        Path(args.outside).write_bytes(save_ply(outside))
    print(f"inside={len(inside)} outside={len(outside)}")
    return 0


def cmd_compose(args):
    from .compose import merge_scenes
    from .ply import load_ply, save_ply

    scenes = [load_ply(Path(p).read_bytes()) for p in args.scenes]
    labels = args.labels.split(",") if args.labels else None
    merged = merge_scenes(scenes, labels=labels)
    Path(args.out).write_bytes(save_ply(merged))
    print(f"merged {len(scenes)} scenes, {len(merged)} splats -> {args.out}")
    return 0


def cmd_render(args):
    from .files import camera_from_json
    from .images import save_float_raster, save_png
    from .ply import load_ply
    from .render import RenderOptions, render

    scene = load_ply(Path(args.scene).read_bytes())
    camera = camera_from_json(args.camera)
    options = RenderOptions(background=tuple(float(x) for x in
                                             args.background.split(",")))
    out = render(scene, camera, options)
    save_png(out.rgb, args.out)
    if args.depth:
        save_float_raster(out.depth, args.depth)
    if args.gray:
        save_float_raster(out.gray, args.gray)
    if args.normal:
        save_float_raster(out.normal, args.normal)
    print(f"rendered {camera.width}x{camera.height} -> {args.out}")
    return 0


def cmd_tsdf_fuse(args):
    from .files import camera_from_json
    from .images import load_float_raster
    from .tsdf import TsdfVolume, fuse_depth, save_volume

    manifest_path = Path(args.views)
    views = json.loads(manifest_path.read_text())
    lower = [float(x) for x in args.lower.split(",")]
    upper = [float(x) for x in args.upper.split(",")]
    volume = TsdfVolume.for_bounds(lower, upper, args.voxel_size,
                                   truncation=args.truncation)
    for view in views:
        camera = camera_from_json(view["camera"])
        depth = load_float_raster(manifest_path.parent / view["depth_path"])
        fuse_depth(volume, depth, camera)
    save_volume(volume, args.out)
    print(f"fused {len(views)} views into {volume.dims} grid -> {args.out}")
    return 0


def cmd_mesh_extract(args):
    from .mesh import save_obj, save_stl
    from .tsdf import extract_mesh, load_volume

    volume = load_volume(args.volume)
    mesh = extract_mesh(volume)
    out = Path(args.out)
    if out.suffix.lower() == ".stl":
        save_stl(mesh, out)
    else:
        save_obj(mesh, out)
    print(f"extracted {len(mesh)} triangles -> {args.out}")
    return 0


def cmd_metrics(args):
    from .images import load_float_raster, load_png
    from .metrics import depth_prior_loss, psnr

    report = {}
    if args.image and args.reference:
        report["psnr_db"] = psnr(load_png(args.image), load_png(args.reference))
    if args.depth and args.reference_depth:
        report["depth_mae"] = depth_prior_loss(load_float_raster(args.depth),
                                               load_float_raster(args.reference_depth))
    if not report:
        raise ValueError("nothing to compute: pass --image/--reference "
                         "and/or --depth/--reference-depth")
    print(json.dumps(report, indent=2))
    return 0


def cmd_fit(args):
    from .files import camera_from_json
    from .fitting import TargetView, fit_scene, write_trace_csv
    from .images import load_float_raster, load_png
    from .metrics import LossWeights
    from .ply import load_ply, save_ply

    manifest_path = Path(args.targets)
    entries = json.loads(manifest_path.read_text())
    views = []
    for entry in entries:
        root = manifest_path.parent
        views.append(TargetView(
            camera=camera_from_json(entry["camera"]),
            rgb=load_png(root / entry["rgb_path"]),
            depth=(load_float_raster(root / entry["depth_path"])
                   if entry.get("depth_path") else None),
            normal=(load_float_raster(root / entry["normal_path"])
                    if entry.get("normal_path") else None),
        ))
    scene = load_ply(Path(args.init).read_bytes())
    weights = LossWeights(photometric=args.w_photometric, scale=args.w_scale,
                          depth_prior=args.w_depth, normal_prior=args.w_normal,
                          ncc=args.w_ncc)
    result = fit_scene(scene, views, weights=weights, iterations=args.iterations,
                       step_size=args.step_size)
    Path(args.out).write_bytes(save_ply(result.scene))
    if args.trace:
        write_trace_csv(result.trace, args.trace)
    print(f"fit: initial loss {result.initial_loss:.6f} -> final "
          f"{result.final_loss:.6f} in {result.accepted_steps} accepted steps")
    return 0


def _assets_from_config(doc):
    from .env import COLOR_COMMANDS
    from .files import regions_from_json, transform_from_json
    from .mesh import load_obj
    from .ply import load_ply
    from .synthetic import flat_arena_assets
    from .transforms import SimilarityTransform

    assets_doc = doc.get("assets", {"synthetic": True})
    if assets_doc.get("synthetic", False):
        return flat_arena_assets(size=float(assets_doc.get("arena_size", 5.0)))

    from .env import EnvAssets

    env_scene = load_ply(Path(assets_doc["env_scene"]).read_bytes())
    object_scenes = {color: load_ply(Path(path).read_bytes())
                     for color, path in assets_doc["objects"].items()}
    for color in object_scenes:
        if color not in COLOR_COMMANDS:
            raise ValueError(f"unknown object color {color!r}")
    regions_doc = regions_from_json(assets_doc["regions"])
    robot_region = regions_doc.pop("robot")
    alignments = {color: transform_from_json(path)
                  for color, path in assets_doc.get("alignments", {}).items()}
    for color in object_scenes:
        alignments.setdefault(color, SimilarityTransform.identity())
    terrain = (load_obj(assets_doc["terrain_mesh"])
               if assets_doc.get("terrain_mesh") else None)
    return EnvAssets(env_scene=env_scene, object_scenes=object_scenes,
                     regions=regions_doc, robot_region=robot_region,
                     alignments=alignments, terrain_mesh=terrain)


def _env_config_from_doc(doc):
    from .augment import AugmentationConfig
    from .env import EnvConfig, RewardWeights

    env_doc = dict(doc.get("env", {}))
    if "reward_weights" in env_doc:
        env_doc["reward_weights"] = RewardWeights(**env_doc["reward_weights"])
    if "augmentation" in env_doc:
        aug = dict(env_doc["augmentation"])
        for key in ("pose_noise_translation", "pose_noise_rotation"):
            if key in aug:
                aug[key] = tuple(aug[key])
        env_doc["augmentation"] = AugmentationConfig(**aug)
    if "v_max" in env_doc:
        env_doc["v_max"] = tuple(env_doc["v_max"])
    if "camera_offset" in env_doc:
        env_doc["camera_offset"] = tuple(env_doc["camera_offset"])
    return EnvConfig(**env_doc)


def cmd_rollout(args):
    from .env import NavEnv, evaluate_policy, scripted_policy

    doc = _load_config_document(args.config)
    config = _env_config_from_doc(doc)
    assets = _assets_from_config(doc)
    env = NavEnv(config, assets)
    if args.policy != "scripted":
        raise ValueError(f"unknown policy {args.policy!r}")
    seeds = range(args.seed, args.seed + args.episodes)
    if args.log_dir:
        from .env import run_episode

        log_dir = Path(args.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        results = []
        for seed in seeds:
            results.append(run_episode(env, scripted_policy, seed=seed,
                                       log_path=log_dir / f"episode_{seed}.jsonl"))
        n = len(results)
        from .env import RolloutSummary

        summary = RolloutSummary(
            episodes=n,
            success_rate=sum(r.success for r in results) / n,
            average_reach_time=sum(r.reach_time for r in results) / n)
    else:
        summary = evaluate_policy(env, scripted_policy, seeds=seeds)
    print(summary)
    return 0


def cmd_serve(args):
    from .env import FOV_X, FOV_Y
    from .files import transform_from_json
    from .ply import load_ply
    from .scene import CameraModel
    from .service import RenderService, serve

    env_scene = load_ply(Path(args.scene).read_bytes())
    object_scenes = {}
    for spec in args.object or []:
        name, _, path = spec.partition("=")
        if not path:
            raise ValueError(f"--object expects NAME=PATH, got {spec!r}")
        object_scenes[name] = load_ply(Path(path).read_bytes())
    camera = CameraModel.from_fov(args.width, args.height, FOV_X, FOV_Y)
    service = RenderService(env_scene, object_scenes, default_camera=camera)
    print(f"serving {len(env_scene)} splats on {args.host}:{args.port}")
    serve(service, host=args.host, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gsforge",
        description="Real-to-sim Gaussian-splatting scene toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="seed for any randomized operation")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("align", help="fit a similarity transform to point pairs")
    p.add_argument("--src", help="JSON list of source [x,y,z] points")
    p.add_argument("--dst", help="JSON list of target [x,y,z] points")
    p.add_argument("--pairs", help="JSON list of {source, target} pairs")
    p.add_argument("--out", help="write the fitted transform JSON here")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("transform", help="apply a similarity transform to a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--transform", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("crop", help="partition a scene by an oriented box")
    p.add_argument("--scene", required=True)
    p.add_argument("--obb", required=True)
    p.add_argument("--inside", required=True)
    p.add_argument("--outside")
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("compose", help="merge scenes with source labels")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--labels", help="comma-separated per-scene labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("render", help="render a scene from a camera")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--depth", help="also write the depth raster here")
    p.add_argument("--gray", help="also write the grayscale raster here")
    p.add_argument("--normal", help="also write the normal raster here")
    p.add_argument("--background", default="0,0,0")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("tsdf-fuse", help="fuse depth views into a TSDF volume")
    p.add_argument("--views", required=True,
                   help="JSON manifest of {camera, depth_path} entries")
    p.add_argument("--voxel-size", type=float, required=True)
    p.add_argument("--truncation", type=float)
    p.add_argument("--lower", required=True, help="x,y,z lower corner")
    p.add_argument("--upper", required=True, help="x,y,z upper corner")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tsdf_fuse)

    p = sub.add_parser("mesh-extract", help="marching cubes over a saved volume")
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True, help=".obj or .stl path")
    p.set_defaults(func=cmd_mesh_extract)

    p = sub.add_parser("metrics", help="image and depth quality metrics")
    p.add_argument("--image")
    p.add_argument("--reference")
    p.add_argument("--depth")
    p.add_argument("--reference-depth")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fit", help="finite-difference scene fitting")
    p.add_argument("--targets", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="loss trace CSV path")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--step-size", type=float, default=0.01)
    p.add_argument("--w-photometric", type=float, default=1.0)
    p.add_argument("--w-scale", type=float, default=100.0)
    p.add_argument("--w-depth", type=float, default=0.1)
    p.add_argument("--w-normal", type=float, default=0.05)
    p.add_argument("--w-ncc", type=float, default=0.2)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rollout", help="run policy episodes, report SR and ART")
    p.add_argument("--config", required=True, help="environment JSON/TOML")
    p.add_argument("--policy", default="scripted")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--log-dir", help="write per-episode JSON-lines logs here")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("serve", help="run the TCP render service")
    p.add_argument("--scene", required=True)
    p.add_argument("--object", action="append", metavar="NAME=PATH")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7462)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=180)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"gsforge: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
