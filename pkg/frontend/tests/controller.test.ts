import { beforeEach, describe, expect, it } from "vitest";

import type { SessionApi } from "../src/api.js";
import { FlowError, GateError, SessionFlow } from "../src/controller.js";
import type {
  ElicitationItem,
  MoodPayload,
  QualityScores,
  RecommendationEntry,
} from "../src/types.js";

const ITEMS: ElicitationItem[] = Array.from({ length: 11 }, (_, i) => ({
  item_id: `m${i}`,
  modality: "music" as const,
  metadata: { title: `track ${i}` },
}));

const PAINTINGS: RecommendationEntry[] = [
  { painting_id: "p7", distance: 0.1, metadata: { title: "lake" } },
  { painting_id: "p2", distance: 0.2, metadata: { title: "field" } },
  { painting_id: "p9", distance: 0.3, metadata: { title: "coast" } },
];

class FakeApi implements SessionApi {
  calls: { method: string; args: unknown[] }[] = [];
  failNextRatings = false;

  private log<T>(method: string, args: unknown[], result: T): Promise<T> {
    this.calls.push({ method, args });
    return Promise.resolve(result);
  }

  createSession(engine: never, seed?: number) {
    return this.log("createSession", [engine, seed], {
      session_id: "s1",
      engine: "haydn" as const,
      state: "created",
    });
  }

  getElicitation(sessionId: string) {
    return this.log("getElicitation", [sessionId], { items: ITEMS });
  }

  submitRatings(sessionId: string, ratings: { item_id: string; rating: number }[]) {
    if (this.failNextRatings) {
      this.failNextRatings = false;
      return Promise.reject(new Error("boom"));
    }
    return this.log("submitRatings", [sessionId, ratings], { state: "elicited" });
  }

  getRecommendations(sessionId: string, n?: number) {
    return this.log("getRecommendations", [sessionId, n], {
      engine: "haydn" as const,
      entries: PAINTINGS,
      truncated: false,
    });
  }

  submitMood(sessionId: string, phase: "pre" | "post", mood: MoodPayload) {
    return this.log("submitMood", [sessionId, phase, mood], { state: "created" });
  }

  submitReflections(sessionId: string, reflections: unknown[]) {
    return this.log("submitReflections", [sessionId, reflections], { state: "recommended" });
  }

  submitFeedback(sessionId: string, scores: QualityScores) {
    return this.log("submitFeedback", [sessionId, scores], { state: "completed" });
  }
}

const SCORES: QualityScores = {
  accuracy: 4,
  diversity: 3,
  novelty: 5,
  serendipity: 4,
  immersion: 5,
  engagement: 4,
};

describe("SessionFlow", () => {
  let api: FakeApi;
  let flow: SessionFlow;

  beforeEach(async () => {
    api = new FakeApi();
    flow = new SessionFlow(api, "haydn");
    await flow.start();
  });

  function completeElicitation(): void {
    for (const item of flow.items) {
      flow.rate(item.item_id, 3);
      flow.recordPlayback(item.item_id, 15_000);
    }
  }

  it("loads 11 elicitation items on start", () => {
    expect(flow.items).toHaveLength(11);
    expect(flow.step).toBe("mood_pre");
  });

  it("moves to elicitation only after the pre-session mood", async () => {
    await flow.submitMoodPre({ category: "negative" });
    expect(flow.step).toBe("elicitation");
    expect(api.calls.find((c) => c.method === "submitMood")!.args[1]).toBe("pre");
  });

  it("blocks rating submission until playback and ratings complete", async () => {
    await flow.submitMoodPre({ category: "neutral" });
    for (const item of flow.items) flow.rate(item.item_id, 4);
    await expect(flow.submitRatings()).rejects.toBeInstanceOf(GateError);

    // partial playback on one track still blocks
    for (const item of flow.items.slice(1)) flow.recordPlayback(item.item_id, 15_000);
    flow.recordPlayback(flow.items[0].item_id, 14_000);
    await expect(flow.submitRatings()).rejects.toBeInstanceOf(GateError);
    expect(api.calls.some((c) => c.method === "submitRatings")).toBe(false);

    flow.recordPlayback(flow.items[0].item_id, 1_000);
    await flow.submitRatings();
    expect(flow.step).toBe("session");
  });

  it("fetches exactly the top-3 paintings after ratings", async () => {
    await flow.submitMoodPre({ category: "neutral" });
    completeElicitation();
    await flow.submitRatings();
    expect(flow.recommendations).toHaveLength(3);
    expect(api.calls.find((c) => c.method === "getRecommendations")!.args[1]).toBe(3);
  });

  it("preserves drafts when the server rejects a submission", async () => {
    await flow.submitMoodPre({ category: "neutral" });
    completeElicitation();
    api.failNextRatings = true;
    await expect(flow.submitRatings()).rejects.toThrow("boom");
    expect(flow.step).toBe("elicitation");
    expect(flow.drafts.asList()).toHaveLength(11);
    await flow.submitRatings();
    expect(flow.step).toBe("session");
  });

  it("walks paintings forward and back with preserved reflection drafts", async () => {
    await flow.submitMoodPre({ category: "neutral" });
    completeElicitation();
    await flow.submitRatings();

    flow.saveReflectionDraft({ text: "calm water", aspects: "color" });
    flow.nextPainting();
    expect(flow.paintingIndex).toBe(1);
    flow.saveReflectionDraft({ text: "open field", aspects: "" });
    flow.previousPainting();
    expect(flow.reflectionDrafts[0].text).toBe("calm water");
    flow.nextPainting();
    expect(flow.reflectionDrafts[1].text).toBe("open field");
  });

  it("requires a reflection before advancing", async () => {
    await flow.submitMoodPre({ category: "neutral" });
    completeElicitation();
    await flow.submitRatings();
    expect(() => flow.nextPainting()).toThrow(FlowError);
  });

  it("posts one reflection per painting and completes the flow", async () => {
    await flow.submitMoodPre({ category: "negative" });
    completeElicitation();
    await flow.submitRatings();

    for (let i = 0; i < 3; i += 1) {
      flow.saveReflectionDraft({ text: `reflection ${i}`, aspects: i === 0 ? "light" : "" });
      if (!flow.isLastPainting()) flow.nextPainting();
    }
    await flow.finishGuidedSession();
    expect(flow.step).toBe("mood_post");

    const reflections = api.calls.find((c) => c.method === "submitReflections")!
      .args[1] as { painting_id: string; text: string; aspects?: string }[];
    expect(reflections).toHaveLength(3);
    expect(reflections.map((r) => r.painting_id)).toEqual(["p7", "p2", "p9"]);
    expect(reflections[0].aspects).toBe("light");
    expect(reflections[1].aspects).toBeUndefined();

    await flow.submitMoodPost({ category: "positive", panas: [4, 4, 3, 4, 5, 1, 1, 2, 1, 1] });
    expect(flow.step).toBe("feedback");
    await flow.submitFeedback(SCORES);
    expect(flow.step).toBe("done");
  });

  it("finishing with a missing reflection jumps back to the gap", async () => {
    await flow.submitMoodPre({ category: "neutral" });
    completeElicitation();
    await flow.submitRatings();
    flow.saveReflectionDraft({ text: "first", aspects: "" });
    flow.nextPainting();
    flow.saveReflectionDraft({ text: "second", aspects: "" });
    flow.nextPainting();
    // last painting left empty
    await expect(flow.finishGuidedSession()).rejects.toThrow(FlowError);
    expect(flow.paintingIndex).toBe(2);
  });

  it("never moves backwards between steps", async () => {
    await flow.submitMoodPre({ category: "neutral" });
    await expect(flow.submitMoodPre({ category: "positive" })).rejects.toThrow(FlowError);
    expect(() => flow.currentPainting()).toThrow(FlowError);
    await expect(flow.submitFeedback(SCORES)).rejects.toThrow(FlowError);
  });
});
