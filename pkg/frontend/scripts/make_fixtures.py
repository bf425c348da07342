"""Regenerate the harness-rendered fixture used by the frontend page tests.

Renders a short orbit, drives it through the embedding boundary, and records
per-frame statuses, pose matrices, and homographies together with the camera
and target geometry the overlay needs. Run from the repo root:

    python3 frontend/scripts/make_fixtures.py
"""

import json
import os

from nftrack import embed
from nftrack.harness import (
    A4_HEIGHT_M,
    A4_WIDTH_M,
    DEFAULT_INTRINSICS,
    TrajectorySpec,
    make_default_target,
    render_sequence,
)

OUT = os.path.join(os.path.dirname(__file__), "..", "fixtures", "overlay_fixture.json")


def main():
    target = make_default_target()
    spec = TrajectorySpec(frames=30, elevation_start=90, elevation_end=78,
                          azimuth_start=0, azimuth_end=35, noise_sigma=2.0,
                          blackout=(12, 15), seed=17)
    seq = render_sequence(target, spec)

    img = target.image
    k = DEFAULT_INTRINSICS
    handle = embed.embed_init(img.pixels.tobytes(), img.width, img.height,
                              A4_WIDTH_M, A4_HEIGHT_M, k.fx, k.fy, k.cx, k.cy)
    assert handle != 0

    frames = []
    for frame in seq.frames:
        r = embed.embed_process(handle, frame.pixels.tobytes(), 320, 240, rgba=False)
        frames.append({"status": r.status,
                       "poseMatrix": list(r.pose_matrix),
                       "homography": list(r.homography),
                       "totalTimeUs": r.total_time_us})
    embed.embed_dispose(handle)

    fixture = {
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy},
        "physicalWidth": A4_WIDTH_M,
        "physicalHeight": A4_HEIGHT_M,
        "corners2d": [list(c) for c in target.corners_2d.tolist()],
        "corners3d": [list(c) for c in target.corners_3d.tolist()],
        "frames": frames,
    }
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as f:
        json.dump(fixture, f)
    found = sum(1 for f in frames if f["status"] > 0)
    print(f"wrote {OUT}: {len(frames)} frames, {found} with pose")


if __name__ == "__main__":
    main()
