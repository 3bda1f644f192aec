import { ApiError } from "./api.js";
import { FlowError, GateError, SessionFlow } from "./controller.js";
import { DEFAULT_COPY, MOOD_CATEGORIES, QUALITY_QUESTIONS, type UiCopy } from "./copy.js";
import { QUALITY_METRICS, type QualityScores } from "./types.js";

const FALLBACK_AUDIO = "./audio/silence.wav";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function ratingRow(current: number | undefined, onPick: (value: number) => void): HTMLElement {
  const row = el("div", { class: "rating-row", role: "radiogroup" });
  for (let value = 1; value <= 5; value += 1) {
    const button = el(
      "button",
      { class: `rating ${current === value ? "selected" : ""}`, type: "button" },
      String(value),
    );
    button.addEventListener("click", () => onPick(value));
    row.appendChild(button);
  }
  return row;
}

/** Renders the current flow step into the root node; re-renders on state changes. */
export class App {
  private errorText = "";
  private readonly audio: HTMLAudioElement;
  private playingItem: string | null = null;
  private lastTimestamp = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly flow: SessionFlow,
    private readonly copy: UiCopy = DEFAULT_COPY,
  ) {
    this.audio = new Audio();
    this.audio.loop = true;
    this.audio.addEventListener("timeupdate", () => this.onAudioProgress());
  }

  private onAudioProgress(): void {
    if (this.playingItem === null) return;
    const now = this.audio.currentTime;
    // loop wraps reset currentTime; only count forward motion
    const delta = now - this.lastTimestamp;
    this.lastTimestamp = now;
    if (delta > 0) {
      this.flow.recordPlayback(this.playingItem, delta * 1000);
      this.render();
    }
  }

  private playItem(itemId: string, url: string | undefined): void {
    this.playingItem = itemId;
    this.lastTimestamp = 0;
    this.audio.src = url || FALLBACK_AUDIO;
    void this.audio.play().catch(() => {
      /* autoplay restrictions surface through the missing progress hint */
    });
  }

  private async guard(action: () => Promise<void>): Promise<void> {
    try {
      this.errorText = "";
      await action();
    } catch (error) {
      if (error instanceof GateError || error instanceof FlowError) {
        this.errorText = error.message;
      } else if (error instanceof ApiError) {
        this.errorText = `${error.message} (${error.code})`;
      } else {
        this.errorText = String(error);
      }
    }
    this.render();
  }

  async start(): Promise<void> {
    await this.guard(() => this.flow.start());
  }

  render(): void {
    this.root.replaceChildren();
    if (this.errorText) {
      this.root.appendChild(el("p", { class: "error", role: "alert" }, this.errorText));
    }
    switch (this.flow.step) {
      case "mood_pre":
        this.renderMood(true);
        break;
      case "elicitation":
        this.renderElicitation();
        break;
      case "session":
        this.renderSession();
        break;
      case "mood_post":
        this.renderMood(false);
        break;
      case "feedback":
        this.renderFeedback();
        break;
      case "done":
        this.root.appendChild(el("h1", {}, this.copy.doneTitle));
        this.root.appendChild(el("p", {}, this.copy.doneBody));
        break;
    }
  }

  private renderMood(pre: boolean): void {
    this.root.appendChild(el("h1", {}, pre ? this.copy.moodPreTitle : this.copy.moodPostTitle));
    this.root.appendChild(el("p", {}, this.copy.moodQuestion));
    const row = el("div", { class: "mood-row" });
    for (const category of MOOD_CATEGORIES) {
      const button = el("button", { class: "mood", type: "button" }, category);
      button.addEventListener("click", () =>
        this.guard(() =>
          pre
            ? this.flow.submitMoodPre({ category })
            : this.flow.submitMoodPost({ category }),
        ),
      );
      row.appendChild(button);
    }
    this.root.appendChild(row);
  }

  private renderElicitation(): void {
    this.root.appendChild(el("h1", {}, this.copy.elicitationTitle));
    this.root.appendChild(el("p", {}, this.copy.elicitationHint));
    const gate = this.flow.gate();
    const statusById = new Map(gate.items.map((s) => [s.itemId, s]));

    const list = el("div", { class: "items" });
    for (const item of this.flow.items) {
      const status = statusById.get(item.item_id)!;
      const card = el("div", { class: "item-card", "data-item": item.item_id });
      card.appendChild(el("h3", {}, item.metadata.title ?? item.item_id));

      if (item.modality === "music") {
        const play = el("button", { class: "play", type: "button" }, "play");
        play.addEventListener("click", () =>
          this.playItem(item.item_id, item.metadata.audio_url),
        );
        card.appendChild(play);
        const secondsLeft = Math.ceil(status.remainingMs / 1000);
        card.appendChild(
          el("span", { class: "playback-hint" }, this.copy.playbackHint(secondsLeft)),
        );
      } else if (item.metadata.image_url) {
        card.appendChild(el("img", { src: item.metadata.image_url, alt: "" }));
      }

      card.appendChild(
        ratingRow(this.flow.drafts.get(item.item_id), (value) => {
          this.flow.rate(item.item_id, value);
          this.render();
        }),
      );
      if (!status.playbackComplete || !status.rated) {
        card.classList.add("incomplete");
      }
      list.appendChild(card);
    }
    this.root.appendChild(list);

    const submit = el("button", { class: "primary", type: "button" }, "submit ratings");
    if (!gate.canSubmit) submit.setAttribute("disabled", "disabled");
    submit.addEventListener("click", () => this.guard(() => this.flow.submitRatings()));
    this.root.appendChild(submit);
  }

  private renderSession(): void {
    this.root.appendChild(el("h1", {}, this.copy.sessionTitle));
    const entry = this.flow.currentPainting();
    const position = `${this.flow.paintingIndex + 1} / ${this.flow.recommendations.length}`;
    this.root.appendChild(el("p", { class: "position" }, position));

    const panel = el("div", { class: "painting-panel" });
    if (entry.metadata.image_url) {
      panel.appendChild(el("img", { src: entry.metadata.image_url, alt: "" }));
    }
    panel.appendChild(el("h3", {}, entry.metadata.title ?? entry.painting_id));
    panel.appendChild(el("p", { class: "prompt" }, this.copy.guidedPrompt));

    const draft = this.flow.reflectionDrafts[this.flow.paintingIndex];
    const textLabel = el("label", {}, this.copy.reflectionLabel);
    const text = el("textarea", { class: "reflection", rows: "4" });
    text.value = draft.text;
    text.addEventListener("input", () =>
      this.flow.saveReflectionDraft({ text: text.value, aspects: aspects.value }),
    );
    textLabel.appendChild(text);
    panel.appendChild(textLabel);

    const aspectsLabel = el("label", {}, this.copy.aspectsLabel);
    const aspects = el("textarea", { class: "aspects", rows: "2" });
    aspects.value = draft.aspects;
    aspects.addEventListener("input", () =>
      this.flow.saveReflectionDraft({ text: text.value, aspects: aspects.value }),
    );
    aspectsLabel.appendChild(aspects);
    panel.appendChild(aspectsLabel);
    this.root.appendChild(panel);

    const nav = el("div", { class: "nav" });
    const back = el("button", { type: "button" }, "back");
    if (this.flow.paintingIndex === 0) back.setAttribute("disabled", "disabled");
    back.addEventListener("click", () => {
      this.flow.previousPainting();
      this.render();
    });
    nav.appendChild(back);

    if (this.flow.isLastPainting()) {
      const finish = el("button", { class: "primary", type: "button" }, "finish session");
      finish.addEventListener("click", () => this.guard(() => this.flow.finishGuidedSession()));
      nav.appendChild(finish);
    } else {
      const next = el("button", { class: "primary", type: "button" }, "next painting");
      next.addEventListener("click", () =>
        this.guard(async () => {
          this.flow.nextPainting();
        }),
      );
      nav.appendChild(next);
    }
    this.root.appendChild(nav);
  }

  private renderFeedback(): void {
    this.root.appendChild(el("h1", {}, this.copy.feedbackTitle));
    const picks = new Map<string, number>();
    const form = el("div", { class: "feedback" });
    for (const metric of QUALITY_METRICS) {
      const block = el("div", { class: "metric", "data-metric": metric });
      block.appendChild(el("p", {}, QUALITY_QUESTIONS[metric] ?? metric));
      block.appendChild(
        ratingRow(picks.get(metric), (value) => {
          picks.set(metric, value);
          block.setAttribute("data-picked", String(value));
        }),
      );
      form.appendChild(block);
    }
    this.root.appendChild(form);

    const submit = el("button", { class: "primary", type: "button" }, "submit feedback");
    submit.addEventListener("click", () =>
      this.guard(async () => {
        if (picks.size < QUALITY_METRICS.length) {
          throw new FlowError("please answer every question");
        }
        await this.flow.submitFeedback(Object.fromEntries(picks) as QualityScores);
      }),
    );
    this.root.appendChild(submit);
  }
}
