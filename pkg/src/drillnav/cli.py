"""Command-line entry point.

Exit codes: 0 success, 2 validation error (degenerate geometry, bad input
file, illegal parameters), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import SessionFormatError, ValidationError
from .fileio import (CaptureSession, calibration_artifact, canonical_json, read_artifact, read_json, read_session,
                     result_artifact, sha256_text, write_json, write_session, write_trajectory_csv, atomic_write_text)
from .handeye import HandEyeResult, solve_handeye
from .metrics import ErrorReport
from .navigate import CalibrationSet, MarkedPose, Tool, desired_eef_pose, mark_pose
from .pointcal import PivotResult, TipResult, solve_pivot, solve_tip
from .se3 import Pose, PoseError, geodesic_angle
from .simulate import (CAPTURE_MODES, CaptureCounts, NoiseModel, Scene, default_plan, execute_procedure,
                       generate_handeye_captures, generate_marking, generate_pivot_captures, generate_tip_captures,
                       load_preset, make_scene)
from .trajectory import plan_trajectory

OUT_DIR_ENV = "DRILLNAV_OUT_DIR"


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / name


def _recovery_line(label: str, est: Pose, truth: Pose) -> str:
    dp = float(np.linalg.norm(est.translation - truth.translation))
    dr = math.degrees(geodesic_angle(est.rotation, truth.rotation))
    return f"{label} recovery error: position {dp:.3e} mm, rotation {dr:.3e} deg"


def _vector_line(label: str, est, truth) -> str:
    return f"{label} recovery error: {float(np.linalg.norm(np.asarray(est) - np.asarray(truth))):.3e} mm"


def _load_noise(args) -> tuple[str, NoiseModel]:
    if getattr(args, "noise_config", None):
        doc = read_json(args.noise_config)
        return str(doc.get("name", Path(args.noise_config).stem)), NoiseModel.from_dict(doc.get("noise", doc))
    return args.noise_preset, load_preset(args.noise_preset)


# ---- simulate -------------------------------------------------------------------------------------------------


def _simulate_one(seed: int, out: Path, preset: str, noise: NoiseModel, counts: CaptureCounts, mode: str,
                  captures_only: bool, plan_kwargs: dict) -> dict:
    scene = make_scene(seed)
    device = {"source": f"drillnav.simulate {__version__}", "seed": seed, "noise_preset": preset,
              "capture_mode": mode, "captured_at": f"sim:seed={seed}"}
    he = generate_handeye_captures(scene, counts.handeye, noise, mode=mode)
    pv = generate_pivot_captures(scene, counts.pivot, noise, mode=mode)
    tips = {t: generate_tip_captures(scene, counts.tip, noise, t, mode=mode) for t in (Tool.RIGID, Tool.FLEXIBLE)}
    marking = generate_marking(scene, noise)

    sessions = {
        "handeye": CaptureSession("handeye", he, device),
        "pivot": CaptureSession("pivot", pv, device),
        "tip_rigid": CaptureSession("tip", tips[Tool.RIGID], {**device, "tool": "rigid"}),
        "tip_flexible": CaptureSession("tip", tips[Tool.FLEXIBLE], {**device, "tool": "flexible"}),
    }
    write_json(out / "scene.json", {"schema_version": 1, "kind": "scene", "scene": scene.to_dict(),
                                    "noise_preset": preset, "noise": noise.to_dict()})
    for name, sess in sessions.items():
        write_session(out / f"{name}.jsonl", sess)
    write_json(out / "marking.json", {"schema_version": 1, "kind": "marking",
                                      "polaris_T_digitizer": marking.to_dict(), "timestamp": 0.0})
    summary = {"seed": seed, "out": str(out)}
    if captures_only:
        return summary

    he_res = solve_handeye(he)
    pv_res = solve_pivot(pv)
    calib = CalibrationSet(he_res, pv_res.x_tip, pv_res,
                           solve_tip(tips[Tool.RIGID], he_res.X, pv_res.x_tip),
                           solve_tip(tips[Tool.FLEXIBLE], he_res.X, pv_res.x_tip))
    digests = {k: s.digest for k, s in sessions.items()}
    write_json(out / "calibration.json", calibration_artifact(calib, digests, device["captured_at"]))
    marked = mark_pose(marking, calib.digitizer_tip_offset)
    write_json(out / "marked.json", _marked_doc(marked, calib.digitizer_tip_offset, "pivot", calib,
                                                (Tool.RIGID, Tool.FLEXIBLE)))
    plan = default_plan(scene, **plan_kwargs)
    report = execute_procedure(scene, calib, marked, plan, noise)
    write_trajectory_csv(out / "plan.csv", plan)
    write_trajectory_csv(out / "drilled.csv", header={**plan.header(), "kind": "drilled_cloud",
                                                     "wall_roughness_sigma_mm": noise.wall_roughness_sigma},
                         points=report.drilled_cloud)
    atomic_write_text(out / "audit.jsonl", "".join(canonical_json(e.to_dict()) + "\n" for e in report.audit))
    write_json(out / "procedure.json", {"schema_version": 1, "kind": "procedure", "noise_preset": preset,
                                        "noise": noise.to_dict(), "session_digests": digests,
                                        "report": report.to_dict()})
    summary.update(rigid_mm=report.rigid_tip_error.position_error,
                   flexible_mm=report.flexible_tip_error.position_error,
                   radius_mm=report.curvature.radius, breach_margin_mm=report.breach_margin)
    return summary


def cmd_simulate(args) -> int:
    preset, noise = _load_noise(args)
    counts = CaptureCounts(args.n_handeye, args.n_pivot, args.n_tip)
    base = Path(args.out) if args.out else _default_out("sim")
    captures_only = args.captures_only or args.capture_mode != "diverse"
    plan_kwargs = {"pilot_depth": args.pilot_depth, "radius": args.radius, "arc_angle": args.arc_angle,
                   "plane_roll": args.plane_roll, "step": args.step}
    seeds = [args.seed + k for k in range(args.runs)]
    outs = [base if args.runs == 1 else base / f"seed_{s}" for s in seeds]
    jobs = [(s, o, preset, noise, counts, args.capture_mode, captures_only, plan_kwargs) for s, o in zip(seeds, outs)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            summaries = list(ex.map(_simulate_one, *zip(*jobs)))
    else:
        summaries = [_simulate_one(*j) for j in jobs]
    for s in summaries:
        if "rigid_mm" in s:
            print(f"seed {s['seed']}: tip error rigid {s['rigid_mm']:.3e} mm, flexible {s['flexible_mm']:.3e} mm, "
                  f"fitted radius {s['radius_mm']:.3f} mm, breach margin {s['breach_margin_mm']:.3f} mm -> {s['out']}")
        else:
            print(f"seed {s['seed']}: captures written -> {s['out']}")
    return 0


# ---- calibrate ------------------------------------------------------------------------------------------------


def _truth(path: Optional[str]) -> Optional[Scene]:
    if not path:
        return None
    doc = read_json(path)
    return Scene.from_dict(doc.get("scene", doc))


def cmd_calibrate_handeye(args) -> int:
    sess = read_session(args.session, "handeye")
    res = solve_handeye(sess.records)
    out = Path(args.out) if args.out else _default_out("handeye_result.json")
    write_json(out, result_artifact("handeye_result", res, {"handeye": sess.digest}))
    print(f"hand-eye: n={res.n_samples} rotation residual {res.rotation_residual_deg:.3e} deg, "
          f"translation residual {res.translation_residual:.3e} mm -> {out}")
    truth = _truth(args.truth)
    if truth is not None:
        print(_recovery_line("X", res.X, truth.ground_truth_X))
        print(_recovery_line("Z", res.Z, truth.ground_truth_Z))
    return 0


def cmd_calibrate_pivot(args) -> int:
    sess = read_session(args.session, "pivot")
    res = solve_pivot(sess.records)
    out = Path(args.out) if args.out else _default_out("pivot_result.json")
    write_json(out, result_artifact("pivot_result", res, {"pivot": sess.digest}))
    print(f"pivot: n={res.n_samples} x_tip {np.round(res.x_tip, 4).tolist()} mm, "
          f"rms residual {res.rms_residual:.3e} mm -> {out}")
    truth = _truth(args.truth)
    if truth is not None:
        print(_vector_line("digitizer tip", res.x_tip, truth.digitizer_tip_offset_true))
    return 0


def _digitizer_offset(args, calib: Optional[CalibrationSet] = None) -> tuple[np.ndarray, str]:
    # precedence: explicit flag, then pivot artifact, then calibration artifact
    if args.digitizer_offset is not None:
        return np.array(args.digitizer_offset, dtype=float), "flag"
    if args.pivot:
        return PivotResult.from_dict(read_artifact(args.pivot, "pivot_result")["result"]).x_tip, "pivot"
    if calib is not None:
        return calib.digitizer_tip_offset, calib.digitizer_tip_source
    raise ValidationError("no digitizer tip offset: pass --digitizer-offset or --pivot")


def cmd_calibrate_tip(args) -> int:
    sess = read_session(args.session, "tip")
    tool = Tool(args.tool or sess.device.get("tool", "rigid"))
    he_doc = read_artifact(args.handeye, "handeye_result")
    he = HandEyeResult.from_dict(he_doc["result"])
    offset, source = _digitizer_offset(args)
    res = solve_tip(sess.records, he.X, offset)
    out = Path(args.out) if args.out else _default_out(f"tip_{tool.value}_result.json")
    digests = {"tip": sess.digest, "handeye": he_doc["input_digests"].get("handeye", "external")}
    write_json(out, result_artifact("tip_result", res, digests,
                                    {"tool": tool.value, "digitizer_tip_offset_mm": [float(c) for c in offset],
                                     "digitizer_tip_source": source}))
    print(f"tip ({tool.value}): n={res.n_samples} x_drill_tip {np.round(res.x_drill_tip, 4).tolist()} mm, "
          f"rms residual {res.rms_residual:.3e} mm -> {out}")
    truth = _truth(args.truth)
    if truth is not None:
        print(_vector_line(f"{tool.value} tip", res.x_drill_tip, truth.tip_offset_true(tool)))
    return 0


# ---- mark / plan / report -------------------------------------------------------------------------------------


def _marked_doc(marked: MarkedPose, offset, source: str, calib: Optional[CalibrationSet], tools) -> dict:
    doc = {"schema_version": 1, "kind": "marked_pose", "marked": marked.to_dict(),
           "digitizer_tip_offset_mm": [float(c) for c in offset], "digitizer_tip_source": source}
    if calib is not None and tools:
        doc["commanded_eef_in_S"] = {t.value: desired_eef_pose(marked, calib, t).to_dict() for t in tools}
    return doc


def cmd_mark(args) -> int:
    doc = read_json(args.digitizer_pose)
    pose = Pose.from_dict(doc["polaris_T_digitizer"] if isinstance(doc, dict) and "polaris_T_digitizer" in doc
                          else doc)
    timestamp = float(doc.get("timestamp", 0.0)) if isinstance(doc, dict) else 0.0
    calib = None
    if args.calibration:
        calib = CalibrationSet.from_dict(read_artifact(args.calibration, "calibration")["calibration"])
    offset, source = _digitizer_offset(args, calib)
    marked = mark_pose(pose, offset, timestamp)
    tools = ()
    if calib is not None:
        tools = [Tool(args.tool)] if args.tool else [t for t in (Tool.RIGID, Tool.FLEXIBLE)
                                                     if getattr(calib, f"{t.value}_tip") is not None]
    result = _marked_doc(marked, offset, source, calib, tools)
    out = Path(args.out) if args.out else _default_out("marked.json")
    write_json(out, result)
    t = marked.polaris_T_drill_tip_desired.translation
    print(f"marked tip at {np.round(t, 4).tolist()} mm (tracker frame), offset from {source} -> {out}")
    return 0


def cmd_plan(args) -> int:
    entry = Pose.from_dict(read_json(args.entry)) if args.entry else Pose()
    traj = plan_trajectory(entry, args.pilot_depth, args.radius, args.arc_angle, args.plane_roll, args.step,
                           frame=args.frame)
    out = Path(args.out) if args.out else _default_out("plan.csv")
    write_trajectory_csv(out, traj)
    end = traj.sample_points[-1]
    print(f"planned {len(traj.sample_points)} points, length {traj.length:.4f} mm, "
          f"endpoint {np.round(end, 4).tolist()} mm -> {out}")
    return 0


def _procedure_files(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.rglob("procedure.json")) if p.is_dir() else [p])
    if not files:
        raise ValidationError("no procedure.json files found")
    return files


def cmd_report(args) -> int:
    files = _procedure_files(args.inputs)
    errs: dict[str, list[PoseError]] = {"rigid": [], "flexible": []}
    seeds, presets, digests = [], set(), []
    for f in files:
        doc = read_artifact(f, "procedure")
        rep = doc["report"]
        for tool in errs:
            errs[tool].append(PoseError.from_dict(rep["tip_error"][tool]))
        seeds.append(int(rep["seed"]))
        presets.add(doc.get("noise_preset"))
        digests.append(sha256_text(canonical_json(doc)))
    meta = {"dataset_digest": sha256_text("\n".join(sorted(digests))),
            "noise_preset": sorted(p for p in presets if p is not None),
            "seed_range": [min(seeds), max(seeds)], "n_runs": len(files)}
    report = ErrorReport.from_errors(errs, meta)
    out = Path(args.out) if args.out else _default_out("report.md")
    md = report.to_markdown()
    atomic_write_text(out, md)
    write_json(out.with_suffix(".json"), report.to_dict())
    sys.stdout.write(md)
    return 0


# ---- parser ---------------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drillnav", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def offset_args(sp):
        sp.add_argument("--digitizer-offset", nargs=3, type=float, metavar=("X", "Y", "Z"),
                        help="digitizer tip offset in its body frame, mm (overrides --pivot)")
        sp.add_argument("--pivot", help="pivot_result artifact supplying the digitizer tip offset")

    s = sub.add_parser("simulate", help="generate synthetic captures and run the procedure end to end")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-preset", default="table1", help="zero or table1")
    s.add_argument("--noise-config", help="JSON file with a NoiseModel (overrides --noise-preset)")
    s.add_argument("--runs", type=int, default=1, help="consecutive seeds; outputs go to seed_<n>/ subdirs")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--n-handeye", type=int, default=15)
    s.add_argument("--n-pivot", type=int, default=20)
    s.add_argument("--n-tip", type=int, default=15)
    s.add_argument("--capture-mode", choices=CAPTURE_MODES, default="diverse")
    s.add_argument("--captures-only", action="store_true")
    s.add_argument("--pilot-depth", type=float, default=25.0)
    s.add_argument("--radius", type=float, default=69.5)
    s.add_argument("--arc-angle", type=float, default=60.0)
    s.add_argument("--plane-roll", type=float, default=0.0)
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV}/sim)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate-handeye", help="solve AX = ZB from a hand-eye session")
    s.add_argument("session")
    s.add_argument("--truth", help="scene.json; print recovery error against ground truth")
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate_handeye)

    s = sub.add_parser("calibrate-pivot", help="digitizer pivot calibration")
    s.add_argument("session")
    s.add_argument("--truth")
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate_pivot)

    s = sub.add_parser("calibrate-tip", help="digitizer-aided drill tip calibration")
    s.add_argument("session")
    s.add_argument("--handeye", required=True, help="handeye_result artifact")
    offset_args(s)
    s.add_argument("--tool", choices=[Tool.RIGID.value, Tool.FLEXIBLE.value])
    s.add_argument("--truth")
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate_tip)

    s = sub.add_parser("mark", help="desired drill-tip pose from a digitizer reading")
    s.add_argument("--digitizer-pose", required=True, help="marking.json or a pose JSON")
    offset_args(s)
    s.add_argument("--calibration", help="calibration artifact; adds commanded flange poses")
    s.add_argument("--tool", choices=[Tool.RIGID.value, Tool.FLEXIBLE.value])
    s.add_argument("--out")
    s.set_defaults(func=cmd_mark)

    s = sub.add_parser("plan", help="pilot segment + J-shape arc")
    s.add_argument("--entry", help="entry pose JSON (default identity)")
    s.add_argument("--pilot-depth", type=float, default=25.0)
    s.add_argument("--radius", type=float, default=69.5)
    s.add_argument("--arc-angle", type=float, default=60.0)
    s.add_argument("--plane-roll", type=float, default=0.0)
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--frame", default="vertebra")
    s.add_argument("--out")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("report", help="aggregate procedure.json files into an error table")
    s.add_argument("inputs", nargs="+", help="procedure.json files or directories containing them")
    s.add_argument("--out", help="Markdown path; a .json twin is written next to it")
    s.set_defaults(func=cmd_report)
    return p


def _fail(args_json: bool, exc: BaseException, code: int) -> int:
    if args_json:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"drillnav: {type(exc).__name__}: {exc}\n")
    return code


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, SessionFormatError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        return _fail(args.json_errors, exc, 2)
    except Exception as exc:  # noqa: BLE001
        return _fail(args.json_errors, exc, 1)


def main() -> None:
    sys.exit(run_cli())
