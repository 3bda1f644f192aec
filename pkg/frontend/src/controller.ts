import type { SessionApi } from "./api.js";
import { PlaybackTracker, REQUIRED_PLAYBACK_MS } from "./playback.js";
import { elicitationGate, RatingDrafts, type ElicitationGate } from "./ratings.js";
import {
  STEP_ORDER,
  type ElicitationItem,
  type EngineName,
  type MoodPayload,
  type QualityScores,
  type RecommendationEntry,
  type ReflectionDraft,
  type UiStep,
} from "./types.js";

export class GateError extends Error {
  constructor(
    message: string,
    readonly gate: ElicitationGate,
  ) {
    super(message);
    this.name = "GateError";
  }
}

export class FlowError extends Error {}

const TOP_N = 3;

/**
 * Drives one participant session: pre-session mood, gated music elicitation,
 * a guided session over the recommended paintings, post-session mood, and
 * quality feedback. Steps only ever move forward; within the guided session
 * the participant may move between paintings with drafts preserved.
 */
export class SessionFlow {
  step: UiStep = "mood_pre";
  sessionId: string | null = null;
  items: ElicitationItem[] = [];
  recommendations: RecommendationEntry[] = [];
  readonly drafts = new RatingDrafts();
  readonly tracker: PlaybackTracker;
  paintingIndex = 0;
  readonly reflectionDrafts: ReflectionDraft[] = [];

  constructor(
    private readonly api: SessionApi,
    readonly engine: EngineName,
    options: { requiredPlaybackMs?: number; seed?: number } = {},
  ) {
    this.tracker = new PlaybackTracker(options.requiredPlaybackMs ?? REQUIRED_PLAYBACK_MS);
    this.seed = options.seed;
  }

  private readonly seed?: number;

  private advance(to: UiStep): void {
    if (STEP_ORDER.indexOf(to) <= STEP_ORDER.indexOf(this.step)) {
      throw new FlowError(`cannot move backwards from ${this.step} to ${to}`);
    }
    this.step = to;
  }

  private requireStep(step: UiStep, action: string): void {
    if (this.step !== step) {
      throw new FlowError(`${action} is only available in the ${step} step (now: ${this.step})`);
    }
  }

  async start(): Promise<void> {
    const session = await this.api.createSession(this.engine, this.seed);
    this.sessionId = session.session_id;
    const elicitation = await this.api.getElicitation(session.session_id);
    this.items = elicitation.items;
  }

  private requireSession(): string {
    if (this.sessionId === null) {
      throw new FlowError("session not started");
    }
    return this.sessionId;
  }

  async submitMoodPre(mood: MoodPayload): Promise<void> {
    this.requireStep("mood_pre", "pre-session mood");
    await this.api.submitMood(this.requireSession(), "pre", mood);
    this.advance("elicitation");
  }

  gate(): ElicitationGate {
    return elicitationGate(this.items, this.drafts, this.tracker);
  }

  rate(itemId: string, rating: number): void {
    this.drafts.set(itemId, rating);
  }

  recordPlayback(itemId: string, deltaMs: number): void {
    this.tracker.addProgress(itemId, deltaMs);
  }

  async submitRatings(): Promise<void> {
    this.requireStep("elicitation", "rating submission");
    const gate = this.gate();
    if (!gate.canSubmit) {
      throw new GateError("every item needs a rating and a full listen first", gate);
    }
    const sessionId = this.requireSession();
    await this.api.submitRatings(sessionId, this.drafts.asList());
    const response = await this.api.getRecommendations(sessionId, TOP_N);
    this.recommendations = response.entries;
    this.reflectionDrafts.length = 0;
    for (let i = 0; i < this.recommendations.length; i += 1) {
      this.reflectionDrafts.push({ text: "", aspects: "" });
    }
    this.paintingIndex = 0;
    this.advance("session");
  }

  currentPainting(): RecommendationEntry {
    this.requireStep("session", "guided session");
    return this.recommendations[this.paintingIndex];
  }

  saveReflectionDraft(draft: ReflectionDraft): void {
    this.requireStep("session", "reflection editing");
    this.reflectionDrafts[this.paintingIndex] = { ...draft };
  }

  previousPainting(): void {
    this.requireStep("session", "navigation");
    if (this.paintingIndex > 0) this.paintingIndex -= 1;
  }

  nextPainting(): void {
    this.requireStep("session", "navigation");
    const draft = this.reflectionDrafts[this.paintingIndex];
    if (!draft.text.trim()) {
      throw new FlowError("please describe your experience before moving on");
    }
    if (this.paintingIndex < this.recommendations.length - 1) {
      this.paintingIndex += 1;
    }
  }

  isLastPainting(): boolean {
    return this.paintingIndex === this.recommendations.length - 1;
  }

  async finishGuidedSession(): Promise<void> {
    this.requireStep("session", "finishing the guided session");
    const missing = this.reflectionDrafts.findIndex((d) => !d.text.trim());
    if (missing >= 0) {
      this.paintingIndex = missing;
      throw new FlowError(`painting ${missing + 1} still needs a reflection`);
    }
    const reflections = this.recommendations.map((entry, i) => ({
      painting_id: entry.painting_id,
      text: this.reflectionDrafts[i].text,
      ...(this.reflectionDrafts[i].aspects.trim()
        ? { aspects: this.reflectionDrafts[i].aspects }
        : {}),
    }));
    await this.api.submitReflections(this.requireSession(), reflections);
    this.advance("mood_post");
  }

  async submitMoodPost(mood: MoodPayload): Promise<void> {
    this.requireStep("mood_post", "post-session mood");
    await this.api.submitMood(this.requireSession(), "post", mood);
    this.advance("feedback");
  }

  async submitFeedback(scores: QualityScores): Promise<void> {
    this.requireStep("feedback", "quality feedback");
    await this.api.submitFeedback(this.requireSession(), scores);
    this.advance("done");
  }
}
