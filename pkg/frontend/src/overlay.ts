/**
 * Pose overlay: project the target-anchored box and axes through the returned
 * camera-from-target matrix and the pinhole intrinsics, and draw them on a
 * 2D canvas over the video.
 */

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export type Point2 = [number, number];
export type Point3 = [number, number, number];

/** Apply the row-major 4x4 camera-from-target matrix, then the pinhole model. */
export function projectPoint(m4: number[], k: Intrinsics, p: Point3): Point2 | null {
  const x = m4[0] * p[0] + m4[1] * p[1] + m4[2] * p[2] + m4[3];
  const y = m4[4] * p[0] + m4[5] * p[1] + m4[6] * p[2] + m4[7];
  const z = m4[8] * p[0] + m4[9] * p[1] + m4[10] * p[2] + m4[11];
  if (z <= 1e-9) return null; // behind the camera
  return [k.fx * (x / z) + k.cx, k.fy * (y / z) + k.cy];
}

/** Apply a row-major 3x3 homography to a template-pixel point. */
export function applyHomography(h: number[], p: Point2): Point2 | null {
  const w = h[6] * p[0] + h[7] * p[1] + h[8];
  if (Math.abs(w) < 1e-12) return null;
  return [
    (h[0] * p[0] + h[1] * p[1] + h[2]) / w,
    (h[3] * p[0] + h[4] * p[1] + h[5]) / w,
  ];
}

/**
 * The overlay box sits on the target plane: its base is the target rectangle
 * itself (so the projected base corners coincide with the H-transferred
 * template corners), extruded toward the camera by the target's short side.
 */
export function boxCorners(physicalW: number, physicalH: number): Point3[] {
  const hw = physicalW / 2;
  const hh = physicalH / 2;
  const depth = -Math.min(physicalW, physicalH); // -z is toward the camera
  const base: Point3[] = [
    [-hw, -hh, 0], [hw, -hh, 0], [hw, hh, 0], [-hw, hh, 0],
  ];
  const top: Point3[] = base.map(([x, y]) => [x, y, depth] as Point3);
  return [...base, ...top];
}

export interface OverlayGeometry {
  /** 8 projected box corners (4 base then 4 top); null if any is unprojectable */
  box: Point2[] | null;
  /** origin, +x, +y, +z axis endpoints */
  axes: Point2[] | null;
}

export function overlayGeometry(
  m4: number[], k: Intrinsics, physicalW: number, physicalH: number,
): OverlayGeometry {
  const corners = boxCorners(physicalW, physicalH);
  const box: Point2[] = [];
  for (const c of corners) {
    const p = projectPoint(m4, k, c);
    if (!p) return { box: null, axes: null };
    box.push(p);
  }
  const s = Math.min(physicalW, physicalH) / 2;
  const axisPts: Point3[] = [[0, 0, 0], [s, 0, 0], [0, s, 0], [0, 0, -s]];
  const axes: Point2[] = [];
  for (const c of axisPts) {
    const p = projectPoint(m4, k, c);
    if (!p) return { box, axes: null };
    axes.push(p);
  }
  return { box, axes };
}

const BOX_EDGES: Array<[number, number]> = [
  [0, 1], [1, 2], [2, 3], [3, 0], // base
  [4, 5], [5, 6], [6, 7], [7, 4], // top
  [0, 4], [1, 5], [2, 6], [3, 7], // verticals
];

export interface StatusInfo {
  status: number;
  fps: number;
  totalTimeUs: number;
}

function phaseName(status: number): string {
  if (status === 1) return "Detecting";
  if (status === 2) return "Tracking";
  return "Searching";
}

export function statusLine(info: StatusInfo): string {
  return `${phaseName(info.status)} | ${info.fps.toFixed(1)} FPS | ${info.totalTimeUs} us`;
}

/** Draw one frame's overlay. Safe to call with any status. */
export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  result: { status: number; poseMatrix: number[]; totalTimeUs: number },
  k: Intrinsics,
  physicalW: number,
  physicalH: number,
  fps: number,
): void {
  ctx.clearRect(0, 0, width, height);

  if (result.status >= 1) {
    const geo = overlayGeometry(result.poseMatrix, k, physicalW, physicalH);
    if (geo.box) {
      ctx.lineWidth = 2;
      ctx.strokeStyle = result.status === 2 ? "#2ecc71" : "#f1c40f";
      ctx.beginPath();
      for (const [a, b] of BOX_EDGES) {
        ctx.moveTo(geo.box[a][0], geo.box[a][1]);
        ctx.lineTo(geo.box[b][0], geo.box[b][1]);
      }
      ctx.stroke();
    }
    if (geo.axes) {
      const colors = ["#e74c3c", "#2ecc71", "#3498db"]; // x red, y green, z blue
      for (let i = 0; i < 3; i++) {
        ctx.strokeStyle = colors[i];
        ctx.lineWidth = 3;
        ctx.beginPath();
        ctx.moveTo(geo.axes[0][0], geo.axes[0][1]);
        ctx.lineTo(geo.axes[i + 1][0], geo.axes[i + 1][1]);
        ctx.stroke();
      }
    }
  } else {
    // searching indicator: pulsing circle in the corner
    ctx.fillStyle = "#e67e22";
    ctx.beginPath();
    ctx.arc(18, 18, 8, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#eee";
    ctx.font = "13px sans-serif";
    ctx.fillText("searching for target...", 34, 23);
  }

  ctx.fillStyle = "#eee";
  ctx.font = "13px monospace";
  ctx.fillText(statusLine({ status: result.status, fps, totalTimeUs: result.totalTimeUs }),
               8, height - 8);
}
