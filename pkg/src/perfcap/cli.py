"""Command-line front end.

Subcommands: synth (build a synthetic scene), track (run the staged solve
on a scene directory), refine (single-view overlay refinement of one
frame), eval (metrics against ground truth), gradcheck (finite-difference
verification of the analytic gradients).

Exit codes: 0 success, 2 bad input, 3 a verification or solve check failed.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, formats, raster
from .camera import load_observations, load_rig
from .character import load_character
from .deform import GraphDeformation, deform_vertices
from .errors import PerfcapError
from .kinematics import PoseParams, forward_kinematics, landmark_positions, node_skinning
from .metrics import MetricReport, landmark_report, mask_iou, render_ious
from .raster import render_mask
from .solver import SolverConfig, monocular_refine, track_sequence
from .synthetic import load_gt, make_scene, save_scene


def _load_config(path, no_smooth=False):
    config = SolverConfig() if path is None else SolverConfig.from_dict(formats.read_json(path))
    if no_smooth:
        config.smooth = False
    return config


def _write_manifest(out_dir, command, inputs, config, elapsed):
    import scipy
    formats.write_json(os.path.join(out_dir, "manifest.json"), {
        "command": command,
        "inputs": inputs,
        "config": config.to_dict() if config is not None else None,
        "kernel_backend": raster.BACKEND,
        "versions": {
            "perfcap": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "elapsed_s": round(elapsed, 3),
    })


def _poses_to_json(poses):
    return [{"theta": p.theta.tolist(), "alpha": p.alpha.tolist(),
             "trans": p.trans.tolist()} for p in poses]


def _poses_from_json(rows):
    return [PoseParams(np.asarray(r["theta"]), np.asarray(r["alpha"]),
                       np.asarray(r["trans"])) for r in rows]


def _deforms_to_json(deformations):
    if deformations is None:
        return None
    return [{"A": d.A.tolist(), "T": d.T.tolist()} for d in deformations]


def _deforms_from_json(rows):
    if rows is None:
        return None
    return [GraphDeformation(np.asarray(r["A"]), np.asarray(r["T"])) for r in rows]


def load_result(path):
    d = formats.read_json(path)
    formats.require_fields(d, ["poses"], os.path.basename(path))
    return (_poses_from_json(d["poses"]), _deforms_from_json(d.get("deformations")),
            d.get("failed"))


def cmd_synth(args):
    scene = make_scene(kind=args.kind, seed=args.seed, n_frames=args.frames,
                       n_cameras=args.cameras, resolution=args.res,
                       noise_px=args.noise_px, dropout=args.dropout,
                       deform_magnitude=args.deform_magnitude)
    save_scene(scene, args.out)
    print(f"scene '{args.kind}' seed={args.seed}: {args.frames} frames, "
          f"{args.cameras} cameras at {args.res}x{args.res} -> {args.out}")
    return 0


def cmd_track(args):
    t0 = time.time()
    character = load_character(os.path.join(args.scene, "character")
                               if args.character is None else args.character)
    rig_path = args.rig or os.path.join(args.scene, "rig.json")
    obs_path = args.obs or os.path.join(args.scene, "obs")
    cameras = load_rig(rig_path)
    obs = load_observations(obs_path)
    config = _load_config(args.config, args.no_smooth)
    result = track_sequence(character, cameras, obs, config)
    formats.ensure_dir(args.out)
    formats.write_json(os.path.join(args.out, "result.json"), {
        "poses": _poses_to_json(result.poses),
        "deformations": _deforms_to_json(result.deformations),
        "failed": result.failed,
    })
    if args.save_meshes:
        mesh_dir = os.path.join(args.out, "meshes")
        formats.ensure_dir(mesh_dir)
        K = character.graph.n_nodes
        for f, pose in enumerate(result.poses):
            fk = forward_kinematics(character.skeleton, pose.theta, pose.alpha)
            nt = node_skinning(character, fk)
            deformation = (result.deformations[f] if result.deformations
                           else GraphDeformation.identity(K))
            verts = deform_vertices(character, deformation, nt, pose.trans)
            formats.write_obj(os.path.join(mesh_dir, f"frame_{f:04d}.obj"),
                              verts, character.mesh.triangles)
    _write_manifest(args.out, "track",
                    {"character": args.character or os.path.join(args.scene, "character"),
                     "rig": rig_path, "obs": obs_path},
                    config, time.time() - t0)
    n_failed = sum(1 for f in result.failed if f)
    print(f"tracked {obs.n_frames} frames ({n_failed} failed) -> {args.out}")
    return 0 if n_failed == 0 else 3


def cmd_refine(args):
    t0 = time.time()
    character = load_character(os.path.join(args.scene, "character"))
    cameras = load_rig(os.path.join(args.scene, "rig.json"))
    obs = load_observations(os.path.join(args.scene, "obs"))
    poses, deformations, _ = load_result(args.result)
    config = _load_config(args.config)
    f, c = args.frame, args.view
    if obs.masks is None:
        print("refine needs silhouette masks", file=sys.stderr)
        return 2
    pose = poses[f]
    deformation = deformations[f] if deformations else None
    before = render_ious(character, [cameras[c]], [pose],
                         [deformation] if deformation else None,
                         obs.masks[f:f + 1, c:c + 1])[0, 0]
    new_pose, new_def = monocular_refine(
        character, cameras[c], obs.detections[f, c], obs.confidence[f, c],
        obs.masks[f, c], config, pose, deformation)
    after = render_ious(character, [cameras[c]], [new_pose], [new_def],
                        obs.masks[f:f + 1, c:c + 1])[0, 0]
    formats.ensure_dir(args.out)
    formats.write_json(os.path.join(args.out, "refine.json"), {
        "frame": f, "view": c,
        "iou_before": before, "iou_after": after,
        "pose": _poses_to_json([new_pose])[0],
        "deformation": _deforms_to_json([new_def])[0],
    })
    _write_manifest(args.out, "refine", {"scene": args.scene, "result": args.result},
                    config, time.time() - t0)
    print(f"frame {f} view {c}: IoU {before:.4f} -> {after:.4f}")
    return 0


def cmd_eval(args):
    character = load_character(os.path.join(args.scene, "character"))
    cameras = load_rig(os.path.join(args.scene, "rig.json"))
    obs = load_observations(os.path.join(args.scene, "obs"))
    gt = load_gt(args.scene)
    poses, deformations, _ = load_result(args.result)
    skel = character.skeleton
    pred = np.stack([landmark_positions(skel, forward_kinematics(skel, p.theta, p.alpha))
                     + p.trans for p in poses])
    report = landmark_report(skel, pred, gt["landmarks"])
    if obs.masks is not None:
        ious = render_ious(character, cameras, poses, deformations, obs.masks)
        report.amviou = float(ious.mean())
        report.per_view_iou = list(ious.mean(axis=0))
    formats.ensure_dir(args.out)
    formats.write_json(os.path.join(args.out, "report.json"), report.to_dict())
    text = "\n".join(report.lines()) + "\n"
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def cmd_gradcheck(args):
    from .gradcheck import run_suite
    results = run_suite(n_seeds=args.seeds)
    all_ok = True
    for r in results:
        state = "ok" if r.ok else "FAIL"
        print(f"{r.name:28s} max rel err {r.rel_err:.3e} (tol {r.tol:.0e}) {state}")
        all_ok = all_ok and r.ok
    return 0 if all_ok else 3


def build_parser():
    p = argparse.ArgumentParser(prog="perfcap",
                                description="template-based performance capture")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic scene")
    s.add_argument("--out", required=True)
    s.add_argument("--kind", choices=["pose", "deform"], default="pose")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frames", type=int, default=30)
    s.add_argument("--cameras", type=int, default=8)
    s.add_argument("--res", type=int, default=256)
    s.add_argument("--noise-px", type=float, default=0.0)
    s.add_argument("--dropout", type=float, default=0.0)
    s.add_argument("--deform-magnitude", type=float, default=0.35)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("track", help="run the staged solve on a scene")
    s.add_argument("--scene", required=True, help="scene directory from synth")
    s.add_argument("--character", help="override character bundle directory")
    s.add_argument("--rig", help="override rig json")
    s.add_argument("--obs", help="override observation directory")
    s.add_argument("--config", help="solver config json")
    s.add_argument("--out", required=True)
    s.add_argument("--no-smooth", action="store_true")
    s.add_argument("--save-meshes", action="store_true")
    s.set_defaults(fn=cmd_track)

    s = sub.add_parser("refine", help="single-view refinement of one frame")
    s.add_argument("--scene", required=True)
    s.add_argument("--result", required=True, help="result.json from track")
    s.add_argument("--frame", type=int, required=True)
    s.add_argument("--view", type=int, required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_refine)

    s = sub.add_parser("eval", help="metrics against scene ground truth")
    s.add_argument("--scene", required=True)
    s.add_argument("--result", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("gradcheck", help="verify analytic gradients")
    s.add_argument("--seeds", type=int, default=50)
    s.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PerfcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
