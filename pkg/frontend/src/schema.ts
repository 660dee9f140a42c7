// Belief payload schema, mirroring the server's validation so the UI can
// never send a payload the server would reject as malformed.

export const RATING_GRID: readonly number[] = Array.from(
  { length: 10 },
  (_, i) => (i + 1) / 2,
);
export const CERTAINTY_LEVELS: readonly number[] = [1, 2, 3, 4, 5];

export interface BatchSlot {
  movieId: number;
  title: string;
  source: string;
  answered: boolean;
}

export interface BatchPayload {
  userId: number;
  batchId: string;
  createdAt: number;
  slots: BatchSlot[];
  shortfallReason?: string;
}

export interface NotSeenPayload {
  movieId: number;
  batchId: string;
  isSeen: 0;
  predictRating: number;
  certainty: number;
}

export interface SeenPayload {
  movieId: number;
  batchId: string;
  isSeen: 1;
  rating: number;
  watchDate?: string;
}

export type BeliefPayload = NotSeenPayload | SeenPayload;

export function isGridRating(value: number): boolean {
  return value >= 0.5 && value <= 5.0 && Math.round(value * 2) === value * 2;
}

const ISO_DATE = /^\d{4}-\d{2}-\d{2}$/;

/** Invariant violations of an outgoing payload; empty when valid. */
export function beliefViolations(payload: BeliefPayload): string[] {
  const out: string[] = [];
  if (!Number.isInteger(payload.movieId) || payload.movieId <= 0) {
    out.push("movieId must be a positive integer");
  }
  if (!payload.batchId) {
    out.push("batchId is required");
  }
  if (payload.isSeen === 0) {
    if (!isGridRating(payload.predictRating)) {
      out.push("predicted rating must be on the 0.5–5.0 half-point grid");
    }
    if (!CERTAINTY_LEVELS.includes(payload.certainty)) {
      out.push("certainty must be a whole number from 1 to 5");
    }
  } else if (payload.isSeen === 1) {
    if (!isGridRating(payload.rating)) {
      out.push("rating must be on the 0.5–5.0 half-point grid");
    }
    if (payload.watchDate !== undefined && !ISO_DATE.test(payload.watchDate)) {
      out.push("watch date must be YYYY-MM-DD");
    }
  } else {
    out.push("isSeen must be 0 or 1");
  }
  return out;
}

export interface BuildResult {
  payload?: BeliefPayload;
  errors: string[];
}

/** Form values arrive as strings (select/input values) and may be empty. */
export function buildNotSeen(
  movieId: number,
  batchId: string,
  predictValue: string,
  certaintyValue: string,
): BuildResult {
  const errors: string[] = [];
  if (predictValue === "") errors.push("pick a predicted rating");
  if (certaintyValue === "") errors.push("pick how sure you are");
  if (errors.length) return { errors };
  const payload: NotSeenPayload = {
    movieId,
    batchId,
    isSeen: 0,
    predictRating: Number(predictValue),
    certainty: Number(certaintyValue),
  };
  const violations = beliefViolations(payload);
  return violations.length ? { errors: violations } : { payload, errors: [] };
}

export function buildSeen(
  movieId: number,
  batchId: string,
  ratingValue: string,
  watchDateValue: string,
): BuildResult {
  const errors: string[] = [];
  if (ratingValue === "") errors.push("pick your rating");
  if (errors.length) return { errors };
  const payload: SeenPayload = {
    movieId,
    batchId,
    isSeen: 1,
    rating: Number(ratingValue),
    ...(watchDateValue !== "" ? { watchDate: watchDateValue } : {}),
  };
  const violations = beliefViolations(payload);
  return violations.length ? { errors: violations } : { payload, errors: [] };
}
