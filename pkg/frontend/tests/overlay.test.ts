/**
 * Page test against the harness-rendered fixture: the overlay's projected box
 * base corners must coincide (<= 2 px) with the target corners transferred
 * through the returned homography, on every frame that carries a pose.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  applyHomography,
  boxCorners,
  overlayGeometry,
  projectPoint,
  statusLine,
} from "../src/overlay.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(
  readFileSync(join(here, "..", "fixtures", "overlay_fixture.json"), "utf-8"),
);

describe("overlay projection vs homography corner transfer", () => {
  it("box base corners stay within 2px of H-projected target corners", () => {
    const k = fixture.intrinsics;
    const frames = fixture.frames.filter((f: any) => f.status > 0);
    expect(frames.length).toBeGreaterThan(10);

    for (const frame of frames) {
      const geo = overlayGeometry(
        frame.poseMatrix, k, fixture.physicalWidth, fixture.physicalHeight);
      expect(geo.box).not.toBeNull();
      for (let i = 0; i < 4; i++) {
        const viaH = applyHomography(frame.homography, fixture.corners2d[i]);
        expect(viaH).not.toBeNull();
        const dx = geo.box![i][0] - viaH![0];
        const dy = geo.box![i][1] - viaH![1];
        expect(Math.hypot(dx, dy)).toBeLessThanOrEqual(2.0);
      }
    }
  });

  it("base corners equal the pose-projected target corners exactly", () => {
    const k = fixture.intrinsics;
    const frame = fixture.frames.find((f: any) => f.status > 0)!;
    const geo = overlayGeometry(
      frame.poseMatrix, k, fixture.physicalWidth, fixture.physicalHeight);
    for (let i = 0; i < 4; i++) {
      const direct = projectPoint(frame.poseMatrix, k, fixture.corners3d[i]);
      expect(direct).not.toBeNull();
      expect(geo.box![i][0]).toBeCloseTo(direct![0], 9);
      expect(geo.box![i][1]).toBeCloseTo(direct![1], 9);
    }
  });
});

describe("overlay geometry helpers", () => {
  it("box has its base on the plane and its top toward the camera", () => {
    const corners = boxCorners(0.297, 0.21);
    expect(corners).toHaveLength(8);
    for (let i = 0; i < 4; i++) expect(corners[i][2]).toBe(0);
    for (let i = 4; i < 8; i++) expect(corners[i][2]).toBeLessThan(0);
  });

  it("projectPoint rejects points behind the camera", () => {
    const identity = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, -1, 0, 0, 0, 1];
    const k = { fx: 100, fy: 100, cx: 0, cy: 0 };
    expect(projectPoint(identity, k, [0, 0, 0])).toBeNull();
  });

  it("identity homography is a no-op", () => {
    const h = [1, 0, 0, 0, 1, 0, 0, 0, 1];
    expect(applyHomography(h, [12, 34])).toEqual([12, 34]);
  });

  it("status line names the phase", () => {
    expect(statusLine({ status: 2, fps: 30.04, totalTimeUs: 9100 }))
      .toBe("Tracking | 30.0 FPS | 9100 us");
    expect(statusLine({ status: 1, fps: 5, totalTimeUs: 90000 }))
      .toContain("Detecting");
    expect(statusLine({ status: 0, fps: 0, totalTimeUs: 0 }))
      .toContain("Searching");
  });
});
