import type { PlaybackTracker } from "./playback.js";
import type { ElicitationItem } from "./types.js";

/** Local rating drafts; survive validation errors and navigation. */
export class RatingDrafts {
  private readonly values = new Map<string, number>();

  set(itemId: string, rating: number): void {
    if (!Number.isInteger(rating) || rating < 1 || rating > 5) {
      throw new RangeError(`rating must be an integer in 1..5, got ${rating}`);
    }
    this.values.set(itemId, rating);
  }

  get(itemId: string): number | undefined {
    return this.values.get(itemId);
  }

  asList(): { item_id: string; rating: number }[] {
    return [...this.values.entries()].map(([item_id, rating]) => ({ item_id, rating }));
  }
}

export interface ItemGateStatus {
  itemId: string;
  rated: boolean;
  needsPlayback: boolean;
  playbackComplete: boolean;
  remainingMs: number;
}

export interface ElicitationGate {
  canSubmit: boolean;
  items: ItemGateStatus[];
}

/**
 * Submission unlocks only when every item carries a rating and every music
 * item has accumulated the required playback time.
 */
export function elicitationGate(
  items: ElicitationItem[],
  drafts: RatingDrafts,
  tracker: PlaybackTracker,
): ElicitationGate {
  const statuses = items.map((item) => {
    const needsPlayback = item.modality === "music";
    const playbackComplete = !needsPlayback || tracker.isComplete(item.item_id);
    return {
      itemId: item.item_id,
      rated: drafts.get(item.item_id) !== undefined,
      needsPlayback,
      playbackComplete,
      remainingMs: needsPlayback ? tracker.remaining(item.item_id) : 0,
    };
  });
  return {
    canSubmit: statuses.every((s) => s.rated && s.playbackComplete),
    items: statuses,
  };
}
