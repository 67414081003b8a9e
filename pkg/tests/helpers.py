import numpy as np

from drillnav.se3 import Pose, random_rotation


def random_pose(rng: np.random.Generator, scale: float = 500.0) -> Pose:
    return Pose(random_rotation(rng), rng.uniform(-scale, scale, 3))


def pose_distance(a: Pose, b: Pose) -> tuple[float, float]:
    """Translation distance (mm) and geodesic rotation distance (deg)."""
    dt = float(np.linalg.norm(a.translation - b.translation))
    dr = float(np.degrees((a.rotation.inv() @ b.rotation).angle))
    return dt, dr


def run_cli_capture(capsys, *argv) -> tuple[int, str, str]:
    from drillnav.cli import run_cli

    code = run_cli([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def full_cli_pipeline(capsys, root, seed: int = 7, preset: str = "table1") -> list[str]:
    """Every subcommand once, all outputs under ``root``; returns stdout per step."""
    sim = root / "sim"
    steps = [
        ("simulate", "--seed", seed, "--noise-preset", preset, "--out", sim),
        ("simulate", "--seed", 100, "--runs", 3, "--noise-preset", preset, "--out", root / "batch"),
        ("calibrate-handeye", sim / "handeye.jsonl", "--truth", sim / "scene.json", "--out", root / "he.json"),
        ("calibrate-pivot", sim / "pivot.jsonl", "--truth", sim / "scene.json", "--out", root / "pivot.json"),
        ("calibrate-tip", sim / "tip_rigid.jsonl", "--handeye", root / "he.json", "--pivot", root / "pivot.json",
         "--truth", sim / "scene.json", "--out", root / "tip_rigid.json"),
        ("calibrate-tip", sim / "tip_flexible.jsonl", "--handeye", root / "he.json",
         "--digitizer-offset", 0, 0, -150, "--out", root / "tip_flexible.json"),
        ("mark", "--digitizer-pose", sim / "marking.json", "--calibration", sim / "calibration.json",
         "--out", root / "marked.json"),
        ("plan", "--pilot-depth", 20, "--arc-angle", 90, "--plane-roll", 15, "--out", root / "plan.csv"),
        ("report", root / "batch", "--out", root / "report.md"),
    ]
    outs = []
    for argv in steps:
        code, out, err = run_cli_capture(capsys, *argv)
        assert code == 0, (argv, err)
        outs.append(out.replace(str(root), "<root>"))
    return outs


def tree_bytes(root) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
