export type EngineName = "mozart" | "haydn" | "salieri" | "visual";

export type UiStep =
  | "mood_pre"
  | "elicitation"
  | "session"
  | "mood_post"
  | "feedback"
  | "done";

export const STEP_ORDER: UiStep[] = [
  "mood_pre",
  "elicitation",
  "session",
  "mood_post",
  "feedback",
  "done",
];

export type Modality = "music" | "painting";

export interface ElicitationItem {
  item_id: string;
  modality: Modality;
  metadata: Record<string, string>;
}

export interface RecommendationEntry {
  painting_id: string;
  distance: number;
  metadata: Record<string, string>;
}

export interface SessionInfo {
  session_id: string;
  engine: EngineName;
  state: string;
}

export interface MoodPayload {
  category: string;
  panas?: number[];
}

export type QualityScores = {
  accuracy: number;
  diversity: number;
  novelty: number;
  serendipity: number;
  immersion: number;
  engagement: number;
};

export const QUALITY_METRICS: (keyof QualityScores)[] = [
  "accuracy",
  "diversity",
  "novelty",
  "serendipity",
  "immersion",
  "engagement",
];

export interface ReflectionDraft {
  text: string;
  aspects: string;
}
