import {
  BatchSlot,
  BeliefPayload,
  CERTAINTY_LEVELS,
  RATING_GRID,
  buildNotSeen,
  buildSeen,
} from "./schema.js";
import type { SubmitResult } from "./api.js";

export type CardPhase = "unmarked" | "seen-form" | "not-seen-form" | "submitted";

type SubmitFn = (payload: BeliefPayload) => Promise<SubmitResult>;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function ratingSelect(id: string, label: string): HTMLSelectElement {
  const select = el("select");
  select.id = id;
  select.setAttribute("aria-label", label);
  const blank = el("option", undefined, "–");
  blank.value = "";
  select.appendChild(blank);
  for (const value of RATING_GRID) {
    const option = el("option", undefined, value.toFixed(1));
    option.value = String(value);
    select.appendChild(option);
  }
  return select;
}

/**
 * One movie card: unmarked -> seen-form | not-seen-form -> submitted.
 * Submitted cards are read-only; at most one submit is in flight per card,
 * and the card only transitions on a 201 from the server.
 */
export class Card {
  readonly el: HTMLElement;
  phase: CardPhase = "unmarked";
  submitting = false;
  batchId: string;

  private body: HTMLElement;
  private error: HTMLElement;

  constructor(
    readonly slot: BatchSlot,
    batchId: string,
    private readonly submit: SubmitFn,
    private readonly onSubmitStateChange: (submitting: boolean) => void,
  ) {
    this.batchId = batchId;
    this.el = el("article", "card");
    this.el.dataset.movieId = String(slot.movieId);
    const title = el("h3", "card-title", slot.title);
    title.id = `card-title-${slot.movieId}`;
    this.el.setAttribute("aria-labelledby", title.id);
    this.el.appendChild(title);
    this.body = el("div", "card-body");
    this.el.appendChild(this.body);
    this.error = el("p", "card-error");
    this.error.setAttribute("role", "alert");
    this.el.appendChild(this.error);
    if (slot.answered) {
      this.showSubmitted("response recorded");
    } else {
      this.showUnmarked();
    }
  }

  /** Re-attach the card to a fresh batch after a refresh kept its movie:
   * open form inputs survive, but submits must carry the new batch id. */
  sync(slot: BatchSlot, batchId: string): void {
    this.batchId = batchId;
    if (slot.answered && this.phase !== "submitted") {
      this.showSubmitted("response recorded");
    } else if (!slot.answered && this.phase === "submitted") {
      this.showUnmarked();
    }
  }

  private setPhase(phase: CardPhase): void {
    this.phase = phase;
    this.el.dataset.phase = phase;
  }

  private clear(): void {
    this.body.replaceChildren();
    this.error.textContent = "";
  }

  private showUnmarked(): void {
    this.setPhase("unmarked");
    this.clear();
    const seen = el("button", "mark-seen", "Seen it");
    seen.type = "button";
    seen.addEventListener("click", () => this.showSeenForm());
    const notSeen = el("button", "mark-not-seen", "Not seen");
    notSeen.type = "button";
    notSeen.addEventListener("click", () => this.showNotSeenForm());
    this.body.append(seen, notSeen);
  }

  private showNotSeenForm(): void {
    this.setPhase("not-seen-form");
    this.clear();
    const predictLabel = el("label", undefined, "What would you rate it?");
    const predict = ratingSelect(`predict-${this.slot.movieId}`, "predicted rating");
    predictLabel.htmlFor = predict.id;
    const certaintyLabel = el("label", undefined, "How sure are you?");
    const certainty = el("select");
    certainty.id = `certainty-${this.slot.movieId}`;
    certainty.setAttribute("aria-label", "certainty");
    certaintyLabel.htmlFor = certainty.id;
    const blank = el("option", undefined, "–");
    blank.value = "";
    certainty.appendChild(blank);
    for (const level of CERTAINTY_LEVELS) {
      const option = el("option", undefined, String(level));
      option.value = String(level);
      certainty.appendChild(option);
    }
    const submit = el("button", "submit", "Submit");
    submit.type = "button";
    submit.addEventListener("click", () => {
      const built = buildNotSeen(
        this.slot.movieId,
        this.batchId,
        predict.value,
        certainty.value,
      );
      void this.send(built, submit, `predicted ${predict.value}, certainty ${certainty.value}`);
    });
    this.body.append(predictLabel, predict, certaintyLabel, certainty, submit);
  }

  private showSeenForm(): void {
    this.setPhase("seen-form");
    this.clear();
    const ratingLabel = el("label", undefined, "Your rating");
    const rating = ratingSelect(`rating-${this.slot.movieId}`, "rating");
    ratingLabel.htmlFor = rating.id;
    const dateLabel = el("label", undefined, "Roughly when did you watch it?");
    const watchDate = el("input");
    watchDate.type = "date";
    watchDate.id = `watch-date-${this.slot.movieId}`;
    dateLabel.htmlFor = watchDate.id;
    const submit = el("button", "submit", "Submit");
    submit.type = "button";
    submit.addEventListener("click", () => {
      const built = buildSeen(
        this.slot.movieId,
        this.batchId,
        rating.value,
        watchDate.value,
      );
      void this.send(built, submit, `rated ${rating.value}`);
    });
    this.body.append(ratingLabel, rating, dateLabel, watchDate, submit);
  }

  private showSubmitted(summary: string): void {
    this.setPhase("submitted");
    this.clear();
    this.body.append(el("p", "submitted-note", `✓ ${summary}`));
  }

  private async send(
    built: { payload?: BeliefPayload; errors: string[] },
    button: HTMLButtonElement,
    summary: string,
  ): Promise<void> {
    if (built.errors.length || !built.payload) {
      this.error.textContent = built.errors.join("; ");
      return; // invalid form state: no network call
    }
    if (this.submitting) return;
    this.submitting = true;
    button.disabled = true;
    this.onSubmitStateChange(true);
    try {
      const result = await this.submit(built.payload);
      if (result.status === 201) {
        this.showSubmitted(summary);
      } else {
        this.error.textContent = result.body.error ?? `submit failed (${result.status})`;
      }
    } catch (err) {
      this.error.textContent = `network error: ${String(err)}`;
    } finally {
      this.submitting = false;
      button.disabled = false;
      this.onSubmitStateChange(false);
    }
  }
}
