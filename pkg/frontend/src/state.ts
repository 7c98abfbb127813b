import { clampBox } from "./geometry.js";
import type { Box, Candidate, SeedRow } from "./types.js";

interface WorkingSeed {
  name: string;
  box: Box;
  // index into candidates when the seed came from accepting one, so a second
  // click on the same candidate selects instead of duplicating
  source: number | null;
}

/**
 * The review working set. Candidates are immutable inputs; the seed list is
 * the only thing the reviewer edits and the only thing ever persisted.
 */
export class ReviewState {
  readonly frameWidth: number;
  readonly frameHeight: number;
  readonly candidates: readonly Candidate[];
  namePrefix = "pig";

  private thresholdValue = 0;
  private working: WorkingSeed[] = [];

  constructor(candidates: readonly Candidate[], frameWidth: number, frameHeight: number) {
    this.candidates = candidates;
    this.frameWidth = frameWidth;
    this.frameHeight = frameHeight;
  }

  get threshold(): number {
    return this.thresholdValue;
  }

  set threshold(value: number) {
    if (!Number.isFinite(value) || value < 0 || value > 1) {
      throw new Error(`threshold must be in [0, 1], got ${value}`);
    }
    this.thresholdValue = value;
  }

  /**
   * Candidates the slider currently shows. Below the top stop this is the
   * same inclusive rule the pipeline's score filter uses; the top stop hides
   * everything, even perfect scores, so the reviewer can start from a clean
   * frame. The working seed list is never affected.
   */
  visibleCandidates(): Array<{ index: number; candidate: Candidate }> {
    const out: Array<{ index: number; candidate: Candidate }> = [];
    this.candidates.forEach((candidate, index) => {
      const visible = this.thresholdValue >= 1 ? false : candidate.score >= this.thresholdValue;
      if (visible) {
        out.push({ index, candidate });
      }
    });
    return out;
  }

  seeds(): SeedRow[] {
    return this.working.map((s) => ({ object_name: s.name, x: s.box.x, y: s.box.y, w: s.box.w, h: s.box.h }));
  }

  seedNames(): string[] {
    return this.working.map((s) => s.name);
  }

  sourceOf(name: string): number | null {
    const seed = this.working.find((s) => s.name === name);
    return seed ? seed.source : null;
  }

  isAccepted(candidateIndex: number): boolean {
    return this.working.some((s) => s.source === candidateIndex);
  }

  boxOf(name: string): Box | null {
    const seed = this.working.find((s) => s.name === name);
    return seed ? { ...seed.box } : null;
  }

  /** Accept one candidate into the working set; returns its seed name. */
  acceptCandidate(candidateIndex: number): string {
    const existing = this.working.find((s) => s.source === candidateIndex);
    if (existing) {
      return existing.name;
    }
    const candidate = this.candidates[candidateIndex];
    if (!candidate) {
      throw new Error(`no candidate at index ${candidateIndex}`);
    }
    const name = this.nextName();
    const box = clampBox({ x: candidate.x, y: candidate.y, w: candidate.w, h: candidate.h }, this.frameWidth, this.frameHeight);
    this.working.push({ name, box, source: candidateIndex });
    return name;
  }

  /** Accept everything the slider currently shows, skipping already-accepted. */
  acceptAllVisible(): string[] {
    return this.visibleCandidates()
      .filter(({ index }) => !this.isAccepted(index))
      .map(({ index }) => this.acceptCandidate(index));
  }

  /** Start a hand-drawn box; geometry is clamped like everything else. */
  addBox(box: Box): string {
    const name = this.nextName();
    this.working.push({ name, box: clampBox(box, this.frameWidth, this.frameHeight), source: null });
    return name;
  }

  removeSeed(name: string): boolean {
    const before = this.working.length;
    this.working = this.working.filter((s) => s.name !== name);
    return this.working.length < before;
  }

  renameSeed(oldName: string, newName: string): boolean {
    const trimmed = newName.trim();
    if (trimmed === "" || this.working.some((s) => s.name === trimmed && s.name !== oldName)) {
      return false;
    }
    const seed = this.working.find((s) => s.name === oldName);
    if (!seed) {
      return false;
    }
    seed.name = trimmed;
    return true;
  }

  updateBox(name: string, box: Box): boolean {
    const seed = this.working.find((s) => s.name === name);
    if (!seed) {
      return false;
    }
    seed.box = clampBox(box, this.frameWidth, this.frameHeight);
    return true;
  }

  private nextName(): string {
    const taken = new Set(this.working.map((s) => s.name));
    for (let i = 1; ; i++) {
      const name = `${this.namePrefix}_${String(i).padStart(2, "0")}`;
      if (!taken.has(name)) {
        return name;
      }
    }
  }
}
