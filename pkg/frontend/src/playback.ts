export const REQUIRED_PLAYBACK_MS = 15_000;

/** Accumulates listened time per track; ratings unlock only after the quota. */
export class PlaybackTracker {
  private readonly playedMs = new Map<string, number>();

  constructor(readonly requiredMs: number = REQUIRED_PLAYBACK_MS) {}

  addProgress(itemId: string, deltaMs: number): void {
    if (!Number.isFinite(deltaMs) || deltaMs <= 0) return;
    this.playedMs.set(itemId, (this.playedMs.get(itemId) ?? 0) + deltaMs);
  }

  played(itemId: string): number {
    return this.playedMs.get(itemId) ?? 0;
  }

  remaining(itemId: string): number {
    return Math.max(0, this.requiredMs - this.played(itemId));
  }

  isComplete(itemId: string): boolean {
    return this.remaining(itemId) === 0;
  }
}
