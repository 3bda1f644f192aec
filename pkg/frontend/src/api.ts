import type {
  ElicitationItem,
  EngineName,
  MoodPayload,
  QualityScores,
  RecommendationEntry,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** What the flow controller needs from the backend. */
export interface SessionApi {
  createSession(engine: EngineName, seed?: number): Promise<SessionInfo>;
  getElicitation(sessionId: string): Promise<{ items: ElicitationItem[] }>;
  submitRatings(
    sessionId: string,
    ratings: { item_id: string; rating: number }[],
  ): Promise<{ state: string }>;
  getRecommendations(
    sessionId: string,
    n?: number,
  ): Promise<{ engine: EngineName; entries: RecommendationEntry[]; truncated: boolean }>;
  submitMood(sessionId: string, phase: "pre" | "post", mood: MoodPayload): Promise<{ state: string }>;
  submitReflections(
    sessionId: string,
    reflections: { painting_id: string; text: string; aspects?: string }[],
  ): Promise<{ state: string }>;
  submitFeedback(sessionId: string, scores: QualityScores): Promise<{ state: string }>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the session service; all ranking happens server-side. */
export class ApiClient implements SessionApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const payload = text ? JSON.parse(text) : {};
    if (!response.ok) {
      throw new ApiError(
        payload.code ?? "http-error",
        payload.message ?? `${method} ${path} failed with ${response.status}`,
        response.status,
      );
    }
    return payload as T;
  }

  healthz(): Promise<{ status: string; engines: string[] }> {
    return this.request("GET", "/healthz");
  }

  createSession(engine: EngineName, seed?: number): Promise<SessionInfo> {
    return this.request("POST", "/sessions", seed === undefined ? { engine } : { engine, seed });
  }

  getElicitation(sessionId: string): Promise<{ items: ElicitationItem[] }> {
    return this.request("GET", `/sessions/${sessionId}/elicitation`);
  }

  submitRatings(
    sessionId: string,
    ratings: { item_id: string; rating: number }[],
  ): Promise<{ state: string }> {
    return this.request("POST", `/sessions/${sessionId}/ratings`, { ratings });
  }

  getRecommendations(
    sessionId: string,
    n = 3,
  ): Promise<{ engine: EngineName; entries: RecommendationEntry[]; truncated: boolean }> {
    return this.request("GET", `/sessions/${sessionId}/recommendations?n=${n}`);
  }

  submitMood(sessionId: string, phase: "pre" | "post", mood: MoodPayload): Promise<{ state: string }> {
    return this.request("POST", `/sessions/${sessionId}/mood`, { phase, ...mood });
  }

  submitReflections(
    sessionId: string,
    reflections: { painting_id: string; text: string; aspects?: string }[],
  ): Promise<{ state: string }> {
    return this.request("POST", `/sessions/${sessionId}/reflections`, { reflections });
  }

  submitFeedback(sessionId: string, scores: QualityScores): Promise<{ state: string }> {
    return this.request("POST", `/sessions/${sessionId}/feedback`, scores);
  }
}
