import { parseCandidates, serializeSeeds } from "./types.js";
import type { Candidate, SeedRow, SessionInfo } from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) {
    return;
  }
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as { error?: string };
    if (body && typeof body.error === "string") {
      message = body.error;
    }
  } catch {
    // non-JSON error body; the status line is all we have
  }
  throw new ApiError(resp.status, message);
}

/** Thin fetch wrapper over the review-serve endpoints. */
export class ReviewClient {
  constructor(readonly base: string = "") {}

  async session(): Promise<SessionInfo> {
    const resp = await fetch(`${this.base}/api/session`);
    await raiseForStatus(resp);
    return (await resp.json()) as SessionInfo;
  }

  frameUrl(frameIndex: number): string {
    return `${this.base}/api/frame/${frameIndex}`;
  }

  async candidates(): Promise<Candidate[]> {
    const resp = await fetch(`${this.base}/api/candidates`);
    await raiseForStatus(resp);
    return parseCandidates(await resp.text());
  }

  /** Persist the reviewed seed list; resolves to the server's written count. */
  async saveSeeds(seeds: readonly SeedRow[]): Promise<number> {
    const resp = await fetch(`${this.base}/api/seeds`, {
      method: "POST",
      headers: { "Content-Type": "application/jsonl" },
      body: serializeSeeds(seeds),
    });
    await raiseForStatus(resp);
    const payload = (await resp.json()) as { written: number };
    return payload.written;
  }
}
