/**
 * Demo page wiring: camera capture scaled to the processing resolution, the
 * tracker boundary over the HTTP bridge, pose overlay, and target upload.
 *
 * URL parameters: ?res=WxH&fx=..&fy=..&cx=..&cy=..&bridge=http://host:port
 */

import { HttpBoundary, TrackerBoundary } from "./boundary.js";
import { CaptureLoop, FrameSource } from "./capture.js";
import { Intrinsics, drawOverlay } from "./overlay.js";

const DEFAULTS = { width: 320, height: 240, fx: 280, fy: 280, cx: 160, cy: 120 };

function readParams() {
  const q = new URLSearchParams(window.location.search);
  let { width, height } = DEFAULTS;
  const res = q.get("res");
  if (res && /^\d+x\d+$/.test(res)) {
    const [w, h] = res.split("x").map(Number);
    width = w;
    height = h;
  }
  // intrinsics default to the harness values scaled to the processing size
  const sx = width / DEFAULTS.width;
  const sy = height / DEFAULTS.height;
  const k: Intrinsics = {
    fx: Number(q.get("fx") ?? DEFAULTS.fx * sx),
    fy: Number(q.get("fy") ?? DEFAULTS.fy * sy),
    cx: Number(q.get("cx") ?? DEFAULTS.cx * sx),
    cy: Number(q.get("cy") ?? DEFAULTS.cy * sy),
  };
  const bridge = q.get("bridge") ?? "http://127.0.0.1:8787";
  return { width, height, k, bridge };
}

function banner(message: string, isError = true): void {
  const el = document.getElementById("banner")!;
  el.textContent = message;
  el.className = isError ? "banner error" : "banner";
  el.style.display = message ? "block" : "none";
}

class VideoFrameSource implements FrameSource {
  private scratch: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;

  constructor(private video: HTMLVideoElement,
              public width: number, public height: number) {
    this.scratch = document.createElement("canvas");
    this.scratch.width = width;
    this.scratch.height = height;
    this.ctx = this.scratch.getContext("2d", { willReadFrequently: true })!;
  }

  grab(): Uint8Array {
    this.ctx.drawImage(this.video, 0, 0, this.width, this.height);
    const data = this.ctx.getImageData(0, 0, this.width, this.height).data;
    return new Uint8Array(data.buffer.slice(0));
  }
}

async function decodeUpload(file: File, width: number, height: number):
    Promise<{ gray: Uint8Array; tw: number; th: number }> {
  const bitmap = await createImageBitmap(file);
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const rgba = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const gray = new Uint8Array(bitmap.width * bitmap.height);
  for (let i = 0; i < gray.length; i++) {
    const r = rgba[4 * i], g = rgba[4 * i + 1], b = rgba[4 * i + 2];
    gray[i] = Math.floor((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return { gray, tw: bitmap.width, th: bitmap.height };
}

async function main(): Promise<void> {
  const { width, height, k, bridge } = readParams();
  const boundary: TrackerBoundary = new HttpBoundary(bridge);

  const video = document.getElementById("video") as HTMLVideoElement;
  const overlay = document.getElementById("overlay") as HTMLCanvasElement;
  overlay.width = width;
  overlay.height = height;
  const octx = overlay.getContext("2d")!;

  let handle = 0;
  let loop: CaptureLoop | null = null;

  async function initTracker(gray: Uint8Array, tw: number, th: number,
                             pw: number, ph: number): Promise<boolean> {
    if (handle !== 0) {
      await boundary.dispose(handle);
      handle = 0;
    }
    const newHandle = await boundary.init({
      templatePixels: gray, tw, th, physicalW: pw, physicalH: ph,
      fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy,
    });
    if (newHandle === 0) {
      banner(`tracker init failed (boundary code ${boundary.lastError()})`);
      return false;
    }
    handle = newHandle;
    loop?.setHandle(handle);
    banner("");
    return true;
  }

  let stream: MediaStream;
  try {
    stream = await navigator.mediaDevices.getUserMedia({
      video: { width: { ideal: 640 }, height: { ideal: 480 } },
      audio: false,
    });
  } catch {
    banner("camera permission denied or no camera available");
    return; // loop never starts, embed is never called
  }
  video.srcObject = stream;
  await video.play();

  const source = new VideoFrameSource(video, width, height);
  loop = new CaptureLoop(boundary, source, {
    onResult: (result, fps) => {
      drawOverlay(octx, width, height, result, k,
                  currentPhysical.w, currentPhysical.h, fps);
    },
    onError: (message) => banner(message),
  });

  const currentPhysical = { w: 0.297, h: 0.21 };
  banner("upload a target image to start tracking", false);

  let ticking = false;
  const tick = async () => {
    await loop!.tick();
    requestAnimationFrame(tick);
  };

  document.getElementById("upload-form")!.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const fileInput = document.getElementById("target-file") as HTMLInputElement;
    const pw = Number((document.getElementById("phys-w") as HTMLInputElement).value);
    const ph = Number((document.getElementById("phys-h") as HTMLInputElement).value);
    if (!fileInput.files?.length) {
      banner("choose a target image first");
      return;
    }
    if (!(pw > 0) || !(ph > 0)) {
      banner("physical size must be positive (meters)");
      return;
    }
    let decoded;
    try {
      decoded = await decodeUpload(fileInput.files[0], width, height);
    } catch {
      banner("could not decode the target image");
      return;
    }
    if (!(await initTracker(decoded.gray, decoded.tw, decoded.th, pw, ph))) {
      return;
    }
    currentPhysical.w = pw;
    currentPhysical.h = ph;
    loop!.setHandle(handle);
    if (!loop!.isRunning) {
      loop!.start();
    }
    if (!ticking) {
      ticking = true;
      requestAnimationFrame(tick);
    }
  });
}

main();
