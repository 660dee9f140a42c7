// Scripted browser test against the real elicitation service: the UI flow
// must land as BeliefRecords (and a rating row for the seen branch) in the
// service's append-only logs.
import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { mount } from "../src/main.js";
import type { Card } from "../src/card.js";
import type { ElicitationRow } from "../src/row.js";

const SEED_SCRIPT = `
import random, sys
from datetime import date, datetime, timezone
from beliefkit.catalog import Movie, RatingEvent, write_movies
from beliefkit import dataset_io

out = sys.argv[1]
now0 = int(datetime(2023, 6, 15, 12, tzinfo=timezone.utc).timestamp())
rng = random.Random(0)
genres = ["Drama", "Action", "Comedy", "Horror", "Romance"]
movies = {}
for mid in range(1, 81):
    release = date(2023, 5, 1) if mid <= 12 else date(2018, 3, 1)
    movies[mid] = Movie(mid, f"Movie {mid}", frozenset([genres[mid % 5]]), release)
events = []
for user in range(100, 140):
    for mid in rng.sample(range(1, 81), 15):
        ts = now0 - rng.randint(10, 400) * 86400
        events.append(RatingEvent(user, mid, rng.choice([2.5, 3.0, 3.5, 4.0, 4.5]), ts))
events.sort(key=lambda e: (e.timestamp, e.user_id, e.movie_id))
write_movies(movies, out + "/movies.csv")
dataset_io.write_ratings(events, out + "/ratings.csv")
print("seeded")
`;

let dataDir: string;
let server: ChildProcess;
let port: number;
let api: ApiClient;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    import("node:net").then(({ createServer }) => {
      const srv = createServer();
      srv.listen(0, "127.0.0.1", () => {
        const address = srv.address();
        if (address && typeof address === "object") {
          const p = address.port;
          srv.close(() => resolve(p));
        } else {
          reject(new Error("no port"));
        }
      });
    });
  });
}

async function waitReady(): Promise<void> {
  const deadline = Date.now() + 20_000;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`http://127.0.0.1:${port}/users/1/top-picks`, {
        headers: { Authorization: "Bearer user-1" },
      });
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error("service did not come up");
}

function readLogLines(name: string): string[] {
  return readFileSync(join(dataDir, name), "utf-8").trimEnd().split("\n").slice(1);
}

function fillNotSeen(card: Card, predict: string, certainty: string): void {
  (card.el.querySelector(".mark-not-seen") as HTMLElement).dispatchEvent(
    new MouseEvent("click", { bubbles: true }),
  );
  card.el.querySelector<HTMLSelectElement>("select[id^='predict-']")!.value = predict;
  card.el.querySelector<HTMLSelectElement>("select[id^='certainty-']")!.value = certainty;
  (card.el.querySelector(".submit") as HTMLElement).dispatchEvent(
    new MouseEvent("click", { bubbles: true }),
  );
}

async function waitPhase(card: Card, phase: string): Promise<void> {
  const deadline = Date.now() + 10_000;
  while (Date.now() < deadline) {
    if (card.phase === phase) return;
    await new Promise((r) => setTimeout(r, 25));
  }
  throw new Error(`card never reached phase ${phase}: ${card.el.querySelector(".card-error")?.textContent}`);
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "elicit-e2e-"));
  const seeded = spawnSync("python3", ["-c", SEED_SCRIPT, dataDir], { encoding: "utf-8" });
  if (!seeded.stdout.includes("seeded")) {
    throw new Error(`seeding failed: ${seeded.stderr}`);
  }
  port = await freePort();
  server = spawn("python3", [
    "-m", "beliefkit", "serve", "--data", dataDir, "--port", String(port), "--seed", "9",
  ], { stdio: "ignore" });
  await waitReady();
  api = new ApiClient(`http://127.0.0.1:${port}`, 1);
});

afterAll(() => {
  server?.kill("SIGKILL");
});

describe("elicitation flow against the live service", () => {
  let row: ElicitationRow;

  it("mounts with the top-picks strip and 8 cards", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    row = await mount(root, api);
    expect(row.movieIds()).toHaveLength(8);
    expect(root.querySelector(".top-picks ol")!.children.length).toBeGreaterThan(0);
  });

  it("not-seen submission lands as isSeen=0 with both Likert fields", async () => {
    const movieId = row.movieIds()[0]!;
    const card = row.card(movieId)!;
    fillNotSeen(card, "3.5", "2");
    await waitPhase(card, "submitted");

    const lines = readLogLines("beliefs.csv");
    expect(lines).toHaveLength(1);
    const [, userId, movie, isSeen, elicit, watch, predict, certainty] = lines[0]!.split(",");
    expect([userId, movie, isSeen]).toEqual(["1", String(movieId), "0"]);
    expect(predict).toBe("3.5");
    expect(certainty).toBe("2");
    expect(elicit).toBe("");
    expect(watch).toBe("");
  });

  it("seen submission lands as isSeen=1 plus a rating row", async () => {
    const ratingsBefore = readLogLines("ratings.csv").length;
    const movieId = row.movieIds()[1]!;
    const card = row.card(movieId)!;
    (card.el.querySelector(".mark-seen") as HTMLElement).dispatchEvent(
      new MouseEvent("click", { bubbles: true }),
    );
    card.el.querySelector<HTMLSelectElement>("select[id^='rating-']")!.value = "4";
    card.el.querySelector<HTMLInputElement>("input[type='date']")!.value = "2023-06-01";
    (card.el.querySelector(".submit") as HTMLElement).dispatchEvent(
      new MouseEvent("click", { bubbles: true }),
    );
    await waitPhase(card, "submitted");

    const beliefLines = readLogLines("beliefs.csv");
    expect(beliefLines).toHaveLength(2);
    const [, userId, movie, isSeen, elicit, watch, predict, certainty] = beliefLines[1]!.split(",");
    expect([userId, movie, isSeen]).toEqual(["1", String(movieId), "1"]);
    expect(elicit).toBe("4.0");
    expect(watch).toBe("2023-06-01");
    expect(predict).toBe("");
    expect(certainty).toBe("");

    const ratingsAfter = readLogLines("ratings.csv");
    expect(ratingsAfter).toHaveLength(ratingsBefore + 1);
    const [rUser, rMovie, rValue] = ratingsAfter[ratingsAfter.length - 1]!.split(",");
    expect([rUser, rMovie, rValue]).toEqual(["1", String(movieId), "4.0"]);
  });

  it("refresh replaces exactly the two submitted cards", async () => {
    const before = row.movieIds();
    await row.load(true);
    const after = row.movieIds();
    expect(after).toHaveLength(8);
    expect(after[0]).not.toBe(before[0]);
    expect(after[1]).not.toBe(before[1]);
    expect(after.slice(2)).toEqual(before.slice(2));
    // two replacement slots were newly logged as requests
    const requestLines = readLogLines("elicit_log.csv");
    expect(requestLines).toHaveLength(10);
  });
});
