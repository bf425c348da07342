/**
 * Tracker boundary types and the HTTP transport.
 *
 * The shapes mirror docs/embed_abi.md exactly: init/process/dispose with flat
 * numbers and byte buffers. The page never issues concurrent process calls on
 * one handle (single in-flight contract).
 */

export interface EmbedResult {
  /** 0 no pose, 1 pose from detection, 2 pose from tracking, <0 contract errors */
  status: number;
  /** 16 numbers, row-major 4x4 camera-from-target matrix (meters) */
  poseMatrix: number[];
  /** 9 numbers, row-major 3x3 template-px -> frame-px homography */
  homography: number[];
  totalTimeUs: number;
}

export interface InitParams {
  templatePixels: Uint8Array; // 8-bit gray, row-major
  tw: number;
  th: number;
  physicalW: number; // meters
  physicalH: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  configText?: string;
}

export interface TrackerBoundary {
  init(params: InitParams): Promise<number>; // nonzero handle, 0 on failure
  lastError(): number;
  process(handle: number, rgba: Uint8Array, fw: number, fh: number): Promise<EmbedResult>;
  dispose(handle: number): Promise<void>;
}

/** Talks to frontend/bridge_server.py, which wraps nftrack.embed 1:1. */
export class HttpBoundary implements TrackerBoundary {
  private errorCode = 0;

  constructor(private baseUrl: string = "http://127.0.0.1:8787") {}

  lastError(): number {
    return this.errorCode;
  }

  async init(p: InitParams): Promise<number> {
    const q = new URLSearchParams({
      tw: String(p.tw), th: String(p.th),
      pw: String(p.physicalW), ph: String(p.physicalH),
      fx: String(p.fx), fy: String(p.fy), cx: String(p.cx), cy: String(p.cy),
      config: p.configText ?? "",
    });
    const resp = await fetch(`${this.baseUrl}/init?${q}`, {
      method: "POST",
      body: new Blob([p.templatePixels as unknown as BlobPart]),
    });
    const data = await resp.json();
    this.errorCode = data.error ?? 0;
    return data.handle ?? 0;
  }

  async process(handle: number, rgba: Uint8Array, fw: number, fh: number): Promise<EmbedResult> {
    const q = new URLSearchParams({
      handle: String(handle), fw: String(fw), fh: String(fh), rgba: "1",
    });
    const resp = await fetch(`${this.baseUrl}/process?${q}`, {
      method: "POST",
      body: new Blob([rgba as unknown as BlobPart]),
    });
    return (await resp.json()) as EmbedResult;
  }

  async dispose(handle: number): Promise<void> {
    await fetch(`${this.baseUrl}/dispose?handle=${handle}`, { method: "POST" });
  }
}
