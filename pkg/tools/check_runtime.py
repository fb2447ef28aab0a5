"""Runtime smoke-check.

Renders a tiny scene in-process and runs every stage once: consistency of
the exact rig, rectification of a perturbed rig, fusion, tracking and
evaluation. Safe to run in CI or developer environments; no files are written.
"""

import sys
from pathlib import Path
from typing import Callable, List, Tuple

# Ensure repo root is on sys.path so top-level packages import when run directly.
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from loguru import logger  # noqa: E402

from config.settings import Settings  # noqa: E402
from metrics.consistency import geometry_consistency  # noqa: E402
from metrics.tracking import evaluate_tracks  # noqa: E402
from pipeline.stages import rectify_sequence, track_sequence  # noqa: E402
from rectification.geometry import RectifiedGeometry  # noqa: E402
from synthetic.generate import generate_scene  # noqa: E402
from synthetic.perturb import PerturbationSpec, perturb_calibration, perturb_depth  # noqa: E402
from synthetic.presets import default_scene  # noqa: E402

EXACT_CONSISTENCY = 1e-6


def run_checks(width: int = 81, height: int = 61, frames: int = 3) -> List[Tuple[str, bool, str]]:
    """Run the smoke checks; returns (name, passed, detail) per check."""
    settings = Settings(threads=1)
    settings.rectifier.samples_per_pair = 64
    seq = generate_scene(default_scene(width=width, height=height, frames=frames))
    exact = RectifiedGeometry.identity(seq.rig, seq.frames)
    results: List[Tuple[str, bool, str]] = []

    def check(name: str, fn: Callable[[], Tuple[bool, str]]) -> None:
        try:
            passed, detail = fn()
        except Exception as e:  # report every failure, keep checking
            passed, detail = False, f"{type(e).__name__}: {e}"
        results.append((name, passed, detail))

    def exact_consistency() -> Tuple[bool, str]:
        c = geometry_consistency(exact, seq.frames[0], samples_per_pair=64)
        return c.median <= EXACT_CONSISTENCY, f"median {c.median:.2e} m, mean {c.mean:.2e} m over {c.count} samples"

    def rectification() -> Tuple[bool, str]:
        p = PerturbationSpec(rotation_deg=0.5, translation=0.02, seed=1)
        noisy_rig = perturb_calibration(seq.rig, p)
        noisy_frames, _ = perturb_depth(seq.frames, p)
        before = geometry_consistency(RectifiedGeometry.identity(noisy_rig, noisy_frames), noisy_frames[0], samples_per_pair=64)
        geom = rectify_sequence(noisy_frames, noisy_rig, "rgb,k,pose,depth", settings)
        after = geometry_consistency(geom, noisy_frames[0], samples_per_pair=64)
        return after.mean < before.mean, f"mean {before.mean:.4f} -> {after.mean:.4f} m"

    def tracking() -> Tuple[bool, str]:
        tracks = track_sequence(seq.frames, exact, seq.queries, settings)
        result = evaluate_tracks(tracks, seq.ground_truth, settings.evaluation.thresholds)
        return len(tracks) > 0, f"{len(tracks)} tracks, AJ {result.aj:.1f}, MTE {result.mte:.4f} m"

    check("exact rig consistency", exact_consistency)
    check("rectification reduces error", rectification)
    check("fusion and tracking", tracking)
    return results


def main() -> int:
    logger.info("Starting in-process smoke check")
    results = run_checks()
    for name, passed, detail in results:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    failed = sum(1 for _, passed, _ in results if not passed)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
