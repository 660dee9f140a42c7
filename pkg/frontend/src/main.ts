import { ApiClient, TopPick } from "./api.js";
import { API_BASE } from "./config.js";
import { ElicitationRow } from "./row.js";

function topPicksStrip(picks: TopPick[]): HTMLElement {
  const strip = document.createElement("section");
  strip.className = "top-picks";
  const heading = document.createElement("h2");
  heading.textContent = "Top picks for you";
  strip.appendChild(heading);
  const list = document.createElement("ol");
  for (const pick of picks) {
    const item = document.createElement("li");
    item.textContent = pick.title;
    list.appendChild(item);
  }
  strip.appendChild(list);
  return strip;
}

/** Mount the app; exported for tests, which pass their own client. */
export async function mount(root: HTMLElement, api: ApiClient): Promise<ElicitationRow> {
  root.replaceChildren();
  try {
    root.appendChild(topPicksStrip(await api.topPicks()));
  } catch {
    // the read-only strip is context only; the row works without it
  }
  const row = new ElicitationRow(api);
  root.appendChild(row.el);
  await row.load();
  return row;
}

const root = typeof document !== "undefined" ? document.getElementById("app") : null;
if (root) {
  const params = new URLSearchParams(window.location.search);
  const userId = Number(params.get("user") ?? "1");
  void mount(root, new ApiClient(API_BASE, userId));
}
