/** Editable models behind the three step panels.
 *
 * Each form turns into exactly one step payload via body().  Validation is
 * split in two: issues() is the server mirror from validate.ts, and
 * blockers() adds the handful of export-time rules the server only enforces
 * when the finished record leaves the store (appearance answers must carry
 * an integer score, nothing else may, verdict answers echo the submitted
 * text).  Submission gates on blockers(), so a session this UI drives can
 * always export.
 */

import { FieldError, StepContext, validateStep } from "./validate.js";
import {
  AnswerWire,
  AnswersStepBody,
  CaptionWire,
  DIMENSIONS,
  Dimension,
  ExtractionStepBody,
  ExtractionWire,
  ItemView,
  PAYLOAD_VERSION,
  QuestionKind,
  ScoringStepBody,
  SummaryWire,
  VerdictWire,
} from "./types.js";

function clone<T>(value: T): T {
  return structuredClone(value);
}

const EMPTY_EXTRACTION: ExtractionWire = { entities: [], relationships: [], questions: [] };

export type ExtractionSeed = "prior" | "prefill" | "empty";

export class ExtractionForm {
  doc: ExtractionWire;
  readonly seed: ExtractionSeed;

  constructor(doc: ExtractionWire, seed: ExtractionSeed) {
    this.doc = clone(doc);
    this.seed = seed;
  }

  /** Prior submission wins over the machine prefill. */
  static fromView(view: ItemView): ExtractionForm {
    const prior = view.prior.extraction as ExtractionStepBody | undefined;
    if (prior !== undefined) return new ExtractionForm(prior.extraction, "prior");
    if (view.prefill !== undefined) return new ExtractionForm(view.prefill, "prefill");
    return new ExtractionForm(EMPTY_EXTRACTION, "empty");
  }

  body(): ExtractionStepBody {
    return { schema_version: PAYLOAD_VERSION, extraction: clone(this.doc) };
  }

  issues(ctx: StepContext): FieldError[] {
    return validateStep("extraction", this.body(), ctx);
  }

  blockers(ctx: StepContext): FieldError[] {
    return this.issues(ctx);
  }
}

export interface AnswerRow {
  qid: string;
  kind: QuestionKind;
  question: string;
  text: string;
  score: number | null;
}

export class AnswersForm {
  rows: AnswerRow[];
  captions: CaptionWire[];

  private constructor(rows: AnswerRow[], captions: CaptionWire[]) {
    this.rows = rows;
    this.captions = captions;
  }

  /** One row per question, in question order; a prior submission's texts
   * and scores carry over by qid. */
  static fromExtraction(extraction: ExtractionWire, prior?: AnswersStepBody): AnswersForm {
    const previous = new Map<string, AnswerWire>();
    for (const answer of prior?.answers ?? []) previous.set(answer.qid, answer);
    const rows = extraction.questions.map((q) => {
      const old = previous.get(q.qid);
      return {
        qid: q.qid,
        kind: q.kind,
        question: q.text,
        text: old?.text ?? "",
        score: old?.score ?? null,
      };
    });
    return new AnswersForm(rows, clone(prior?.captions ?? []));
  }

  row(qid: string): AnswerRow | undefined {
    return this.rows.find((r) => r.qid === qid);
  }

  setText(qid: string, text: string): void {
    const row = this.row(qid);
    if (row) row.text = text;
  }

  setScore(qid: string, score: number | null): void {
    const row = this.row(qid);
    if (row) row.score = score;
  }

  setCaption(entity: string, caption: string): void {
    const existing = this.captions.find((c) => c.entity === entity);
    if (existing) existing.caption = caption;
    else this.captions.push({ entity, caption });
  }

  removeCaption(entity: string): void {
    this.captions = this.captions.filter((c) => c.entity !== entity);
  }

  body(): AnswersStepBody {
    return {
      schema_version: PAYLOAD_VERSION,
      captions: clone(this.captions),
      answers: this.rows.map((r) => ({ qid: r.qid, text: r.text, score: r.score })),
    };
  }

  issues(ctx: StepContext): FieldError[] {
    return validateStep("answers", this.body(), ctx);
  }

  blockers(ctx: StepContext): FieldError[] {
    const out = this.issues(ctx);
    for (const row of this.rows) {
      const field = `answers.${row.qid}`;
      if (row.kind === "appearance") {
        if (row.score === null) {
          out.push({ field, message: "appearance answer needs a score" });
        } else if (!Number.isInteger(row.score)) {
          out.push({ field, message: "score must be a whole number" });
        }
      } else if (row.score !== null) {
        out.push({ field, message: "only appearance answers carry a score" });
      }
    }
    return out;
  }
}

export interface VerdictRow {
  qid: string;
  kind: QuestionKind;
  question: string;
  /** Echo of the submitted answer; the judge reads it, never edits it. */
  answer: string;
  explanation: string;
  score: number;
}

export interface SummaryRow {
  dimension: Dimension;
  explanation: string;
  score: number;
}

export class ScoringForm {
  verdicts: VerdictRow[];
  summaries: SummaryRow[];

  private constructor(verdicts: VerdictRow[], summaries: SummaryRow[]) {
    this.verdicts = verdicts;
    this.summaries = summaries;
  }

  /** Verdict rows track the answers step: the answer column is always the
   * latest submitted text, while explanations and scores carry over from a
   * prior scoring submission by qid. */
  static fromAnswers(
    extraction: ExtractionWire,
    answers: AnswersStepBody,
    prior?: ScoringStepBody,
  ): ScoringForm {
    const answered = new Map<string, AnswerWire>();
    for (const answer of answers.answers) answered.set(answer.qid, answer);
    const judged = new Map<string, VerdictWire>();
    for (const verdict of prior?.verdicts ?? []) judged.set(verdict.qid, verdict);
    const verdicts = extraction.questions.map((q) => {
      const old = judged.get(q.qid);
      return {
        qid: q.qid,
        kind: q.kind,
        question: q.text,
        answer: answered.get(q.qid)?.text ?? "",
        explanation: old?.explanation ?? "",
        score: old?.score ?? 0,
      };
    });
    const recalled = new Map<string, SummaryWire>();
    for (const summary of prior?.summaries ?? []) recalled.set(summary.dimension, summary);
    const summaries = DIMENSIONS.map((dimension) => {
      const old = recalled.get(dimension);
      return { dimension, explanation: old?.explanation ?? "", score: old?.score ?? 0 };
    });
    return new ScoringForm(verdicts, summaries);
  }

  verdict(qid: string): VerdictRow | undefined {
    return this.verdicts.find((v) => v.qid === qid);
  }

  setVerdict(qid: string, explanation: string, score: number): void {
    const row = this.verdict(qid);
    if (row) {
      row.explanation = explanation;
      row.score = score;
    }
  }

  setSummary(dimension: Dimension, explanation: string, score: number): void {
    const row = this.summaries.find((s) => s.dimension === dimension);
    if (row) {
      row.explanation = explanation;
      row.score = score;
    }
  }

  body(): ScoringStepBody {
    return {
      schema_version: PAYLOAD_VERSION,
      verdicts: this.verdicts.map((v) => ({
        qid: v.qid,
        answer: v.answer,
        explanation: v.explanation,
        score: v.score,
      })),
      summaries: this.summaries.map((s) => ({
        dimension: s.dimension,
        explanation: s.explanation,
        score: s.score,
      })),
    };
  }

  issues(ctx: StepContext): FieldError[] {
    return validateStep("scoring", this.body(), ctx);
  }

  blockers(ctx: StepContext): FieldError[] {
    const out = this.issues(ctx);
    for (const row of this.verdicts) {
      const field = `verdicts.${row.qid}`;
      if (!Number.isInteger(row.score)) {
        out.push({ field, message: "score must be a whole number" });
      }
      if (row.kind !== "appearance" && !row.answer.trim()) {
        out.push({ field, message: "empty answer allowed only for appearance" });
      }
    }
    for (const row of this.summaries) {
      if (!Number.isInteger(row.score)) {
        out.push({ field: `summaries.${row.dimension}`, message: "score must be a whole number" });
      }
    }
    return out;
  }
}
