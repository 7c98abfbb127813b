// Wire formats shared with the review server. Candidates and seeds travel as
// JSONL: one JSON object per line, numbers in on-disk pixel coordinates.

export interface SessionInfo {
  frame_index: number;
  frame_width: number;
  frame_height: number;
  n_candidates: number;
  seeds_path: string;
  version: string;
}

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface Candidate extends Box {
  frame_index: number;
  label: string;
  score: number;
}

export interface SeedRow extends Box {
  object_name: string;
}

/** A row of the persisted seeds file (what the server writes back). */
export interface PersistedSeed extends SeedRow {
  provenance: string;
}

function requireFields(rec: Record<string, unknown>, fields: string[], where: string): void {
  for (const field of fields) {
    if (!(field in rec)) {
      throw new Error(`${where}: missing field "${field}"`);
    }
  }
}

function parseLines(jsonl: string): Array<[number, Record<string, unknown>]> {
  const out: Array<[number, Record<string, unknown>]> = [];
  const lines = jsonl.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line === "") continue;
    let rec: unknown;
    try {
      rec = JSON.parse(line);
    } catch (err) {
      throw new Error(`line ${i + 1}: ${(err as Error).message}`);
    }
    if (typeof rec !== "object" || rec === null || Array.isArray(rec)) {
      throw new Error(`line ${i + 1}: expected a JSON object`);
    }
    out.push([i + 1, rec as Record<string, unknown>]);
  }
  return out;
}

export function parseCandidates(jsonl: string): Candidate[] {
  return parseLines(jsonl).map(([lineno, rec]) => {
    requireFields(rec, ["frame_index", "label", "score", "x", "y", "w", "h"], `line ${lineno}`);
    return {
      frame_index: Number(rec.frame_index),
      label: String(rec.label),
      score: Number(rec.score),
      x: Number(rec.x),
      y: Number(rec.y),
      w: Number(rec.w),
      h: Number(rec.h),
    };
  });
}

export function parseSeedFile(jsonl: string): PersistedSeed[] {
  return parseLines(jsonl).map(([lineno, rec]) => {
    requireFields(rec, ["object_name", "provenance", "x", "y", "w", "h"], `line ${lineno}`);
    return {
      object_name: String(rec.object_name),
      provenance: String(rec.provenance),
      x: Number(rec.x),
      y: Number(rec.y),
      w: Number(rec.w),
      h: Number(rec.h),
    };
  });
}

/** Seeds as the POST /api/seeds body. Geometry is passed through untouched. */
export function serializeSeeds(seeds: readonly SeedRow[]): string {
  return seeds
    .map((s) => JSON.stringify({ object_name: s.object_name, x: s.x, y: s.y, w: s.w, h: s.h }))
    .join("\n");
}
