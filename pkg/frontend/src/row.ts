import type { ApiClient } from "./api.js";
import { Card } from "./card.js";
import type { BatchPayload } from "./schema.js";

export const CAPTION =
  "Tell us about movies you have NOT seen before: what you think you would " +
  "rate them, and how sure you are. If you have seen one, mark it seen and " +
  "rate it instead.";

/**
 * The elicitation row: a caption, the cards, and a refresh control that pulls
 * replacement movies for the already-submitted cards.  Re-rendering reuses
 * the card element when its movie is unchanged, so open forms keep their
 * inputs; refresh is blocked while any submit is in flight.
 */
export class ElicitationRow {
  readonly el: HTMLElement;
  readonly cardsEl: HTMLElement;
  readonly refreshButton: HTMLButtonElement;
  batchId: string | null = null;

  private cards = new Map<number, Card>();
  private inFlight = 0;

  constructor(private readonly api: ApiClient) {
    this.el = document.createElement("section");
    this.el.className = "elicitation-row";

    const caption = document.createElement("p");
    caption.className = "row-caption";
    caption.textContent = CAPTION;
    this.el.appendChild(caption);

    this.cardsEl = document.createElement("div");
    this.cardsEl.className = "cards";
    this.el.appendChild(this.cardsEl);

    this.refreshButton = document.createElement("button");
    this.refreshButton.type = "button";
    this.refreshButton.className = "refresh";
    this.refreshButton.textContent = "Refresh row";
    this.refreshButton.addEventListener("click", () => void this.load(true));
    this.el.appendChild(this.refreshButton);
  }

  get submitsInFlight(): number {
    return this.inFlight;
  }

  async load(refresh = false): Promise<void> {
    if (refresh && this.inFlight > 0) return; // a submit is mid-air
    const payload = await this.api.getBatch(refresh);
    this.render(payload);
  }

  private onSubmitStateChange(submitting: boolean): void {
    this.inFlight += submitting ? 1 : -1;
    this.refreshButton.disabled = this.inFlight > 0;
  }

  private render(payload: BatchPayload): void {
    this.batchId = payload.batchId;
    const next = new Map<number, Card>();
    const ordered: HTMLElement[] = [];
    for (const slot of payload.slots) {
      const existing = this.cards.get(slot.movieId);
      let card: Card;
      if (existing) {
        // same movie kept its position: keep the DOM (and any open form),
        // re-bound to the current batch id
        existing.sync(slot, payload.batchId);
        card = existing;
      } else {
        card = new Card(
          slot,
          payload.batchId,
          (p) => this.api.postBelief(p),
          (s) => this.onSubmitStateChange(s),
        );
      }
      next.set(slot.movieId, card);
      ordered.push(card.el);
    }
    this.cards = next;
    this.cardsEl.replaceChildren(...ordered);
  }

  movieIds(): number[] {
    return Array.from(this.cardsEl.children).map((child) =>
      Number((child as HTMLElement).dataset.movieId),
    );
  }

  card(movieId: number): Card | undefined {
    return this.cards.get(movieId);
  }
}
