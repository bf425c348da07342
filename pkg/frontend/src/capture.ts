/**
 * Frame capture loop: pull RGBA buffers from a source at display rate and
 * hand them to the tracker boundary, one call in flight at a time
 * (latest-frame-wins: ticks arriving while a call is pending are dropped).
 *
 * The loop is DOM-free; app.ts adapts getUserMedia + canvas into FrameSource.
 */

import { EmbedResult, TrackerBoundary } from "./boundary.js";

export interface FrameSource {
  /** RGBA pixels of the current frame at the processing resolution. */
  grab(): Uint8Array;
  width: number;
  height: number;
}

export interface CaptureCallbacks {
  onResult(result: EmbedResult, fps: number): void;
  onError(message: string): void;
}

export class CaptureLoop {
  private handle = 0;
  private inFlight = false;
  private running = false;
  private processed = 0;
  private windowStart = 0;
  private fps = 0;
  /** ticks dropped because a process call was pending */
  dropped = 0;

  constructor(
    private boundary: TrackerBoundary,
    private source: FrameSource,
    private callbacks: CaptureCallbacks,
    private now: () => number = () => Date.now(),
  ) {}

  setHandle(handle: number): void {
    this.handle = handle;
  }

  get isRunning(): boolean {
    return this.running;
  }

  start(): void {
    if (this.handle === 0) {
      this.callbacks.onError("tracker not initialized");
      return;
    }
    this.running = true;
    this.windowStart = this.now();
    this.processed = 0;
  }

  stop(): void {
    this.running = false;
  }

  /** One animation tick. Returns true when a process call was issued. */
  async tick(): Promise<boolean> {
    if (!this.running || this.handle === 0) return false;
    if (this.inFlight) {
      this.dropped += 1;
      return false;
    }
    this.inFlight = true;
    try {
      const rgba = this.source.grab();
      const result = await this.boundary.process(
        this.handle, rgba, this.source.width, this.source.height);
      this.processed += 1;
      const elapsed = this.now() - this.windowStart;
      if (elapsed >= 1000) {
        this.fps = (this.processed * 1000) / elapsed;
        this.processed = 0;
        this.windowStart = this.now();
      }
      if (result.status < 0) {
        this.callbacks.onError(`boundary error ${result.status}`);
      } else {
        this.callbacks.onResult(result, this.fps);
      }
      return true;
    } catch (e) {
      this.callbacks.onError(`bridge unreachable: ${String(e)}`);
      return false;
    } finally {
      this.inFlight = false;
    }
  }
}
