/** All participant-facing text, overridable per deployment. */
export interface UiCopy {
  moodPreTitle: string;
  moodPostTitle: string;
  moodQuestion: string;
  elicitationTitle: string;
  elicitationHint: string;
  playbackHint: (secondsLeft: number) => string;
  sessionTitle: string;
  guidedPrompt: string;
  reflectionLabel: string;
  aspectsLabel: string;
  feedbackTitle: string;
  doneTitle: string;
  doneBody: string;
}

export const DEFAULT_COPY: UiCopy = {
  moodPreTitle: "Before we begin",
  moodPostTitle: "After the session",
  moodQuestion: "Which of these best describes your mood right now?",
  elicitationTitle: "Tell us what you like",
  elicitationHint:
    "Listen to each clip, then rate how much you enjoyed it from 1 (not at all) to 5 (very much).",
  playbackHint: (secondsLeft: number) =>
    secondsLeft > 0 ? `keep listening: ${secondsLeft}s to go` : "ready to rate",
  sessionTitle: "Your guided session",
  guidedPrompt:
    "Take your time with this painting. In your mind, step inside it and look around. " +
    "When you are ready, describe how being there felt.",
  reflectionLabel: "How did you feel while spending time in this painting?",
  aspectsLabel: "Which parts of the painting shaped that experience?",
  feedbackTitle: "About your recommendations",
  doneTitle: "All done",
  doneBody: "Thank you for taking part. You can close this window now.",
};

export const MOOD_CATEGORIES = ["positive", "neutral", "negative"];

export const QUALITY_QUESTIONS: Record<string, string> = {
  accuracy: "The paintings matched my personal taste",
  diversity: "The paintings felt varied",
  novelty: "I discovered paintings new to me",
  serendipity: "Some paintings surprised me in a good way",
  immersion: "I felt absorbed while viewing them",
  engagement: "The paintings held my attention",
};
