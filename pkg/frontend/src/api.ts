import type { BatchPayload, BeliefPayload } from "./schema.js";

export interface SubmitResult {
  status: number;
  body: { error?: string } & Record<string, unknown>;
}

export interface TopPick {
  position: number;
  movieId: number;
  title: string;
  predictedRating: number | null;
}

/** Thin client over the elicitation service; demo bearer auth per user. */
export class ApiClient {
  constructor(
    readonly base: string,
    readonly userId: number,
  ) {}

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer user-${this.userId}`,
      "Content-Type": "application/json",
    };
  }

  async getBatch(refresh = false): Promise<BatchPayload> {
    const query = refresh ? "?refresh=1" : "";
    const resp = await fetch(
      `${this.base}/users/${this.userId}/elicitation-batch${query}`,
      { headers: this.headers() },
    );
    if (!resp.ok) {
      throw new Error(`batch request failed: ${resp.status}`);
    }
    return (await resp.json()) as BatchPayload;
  }

  /** Does not throw on 4xx: the card shows those inline. */
  async postBelief(payload: BeliefPayload): Promise<SubmitResult> {
    const resp = await fetch(`${this.base}/users/${this.userId}/beliefs`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify(payload),
    });
    return { status: resp.status, body: await resp.json() };
  }

  async topPicks(): Promise<TopPick[]> {
    const resp = await fetch(`${this.base}/users/${this.userId}/top-picks`, {
      headers: this.headers(),
    });
    if (!resp.ok) {
      throw new Error(`top picks request failed: ${resp.status}`);
    }
    const body = (await resp.json()) as { picks: TopPick[] };
    return body.picks;
  }
}
