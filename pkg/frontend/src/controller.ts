/** Session and per-item submission flow.
 *
 * ItemWorkflow owns the three step forms for one item and the revision
 * counters the server's optimistic locking needs.  Nothing leaves the
 * client while the form would be rejected: submit() first applies the same
 * gate and validation the server would, so a request is only spent on a
 * payload that should land.
 *
 * A dropped response is the one genuinely ambiguous case: the submission
 * may or may not have been recorded.  retry() resubmits with the original
 * expected_revision; if that conflicts, the server is re-read and, when its
 * latest stored payload for the step is byte-for-byte ours, the first
 * attempt is known to have landed and the retry resolves as accepted
 * without writing a duplicate.
 */

import { AnnotationClient, ApiError, NetworkError } from "./api.js";
import { AnswersForm, ExtractionForm, ScoringForm } from "./forms.js";
import { FieldError, StepContext, stepGateIssue } from "./validate.js";
import {
  AnswersStepBody,
  ExtractionStepBody,
  ImageWire,
  ItemStage,
  ItemView,
  Progress,
  PromptWire,
  ScoringStepBody,
  StepAccepted,
  StepBody,
  StepKind,
  STEP_ORDER,
} from "./types.js";

export type SubmitOutcome =
  | { status: "accepted"; result: StepAccepted; recovered?: boolean }
  | { status: "invalid"; source: "client" | "server"; violations: FieldError[] }
  | { status: "conflict"; message: string }
  | { status: "retryable"; message: string };

interface AcceptedBodies {
  extraction?: ExtractionStepBody;
  answers?: AnswersStepBody;
  scoring?: ScoringStepBody;
}

function stageIndex(stage: ItemStage): number {
  return stage === "done" ? STEP_ORDER.length : STEP_ORDER.indexOf(stage);
}

export class ItemWorkflow {
  readonly itemId: string;
  readonly prompt: PromptWire;
  readonly image: ImageWire;
  stage: ItemStage;
  revisions: Record<StepKind, number>;
  extraction: ExtractionForm;
  answers: AnswersForm | null = null;
  scoring: ScoringForm | null = null;

  private accepted: AcceptedBodies;
  private lastBody: Partial<Record<StepKind, StepBody>> = {};

  constructor(
    private readonly client: AnnotationClient,
    private readonly annotatorId: string,
    view: ItemView,
  ) {
    this.itemId = view.item_id;
    this.prompt = view.prompt;
    this.image = view.image;
    this.stage = view.current_step;
    this.revisions = { ...view.revisions };
    this.accepted = {
      extraction: view.prior.extraction as ExtractionStepBody | undefined,
      answers: view.prior.answers as AnswersStepBody | undefined,
      scoring: view.prior.scoring as ScoringStepBody | undefined,
    };
    this.extraction = ExtractionForm.fromView(view);
    this.rebuildDownstream();
  }

  /** Latest accepted documents, shaped for the validators. */
  context(): StepContext {
    return {
      extraction: this.accepted.extraction?.extraction ?? null,
      answeredQids: this.accepted.answers?.answers.map((a) => a.qid) ?? null,
      judgedQids: this.accepted.scoring?.verdicts.map((v) => v.qid) ?? null,
    };
  }

  form(step: StepKind): ExtractionForm | AnswersForm | ScoringForm | null {
    if (step === "extraction") return this.extraction;
    if (step === "answers") return this.answers;
    return this.scoring;
  }

  /** Everything that would stop this step from landing and exporting. */
  blockers(step: StepKind): FieldError[] {
    const gate = stepGateIssue(step, this.stage);
    if (gate !== null) return [gate];
    const form = this.form(step);
    if (form === null) {
      return [{ field: "step", message: "extraction step not submitted yet" }];
    }
    return form.blockers(this.context());
  }

  canSubmit(step: StepKind): boolean {
    return this.blockers(step).length === 0;
  }

  async submit(step: StepKind): Promise<SubmitOutcome> {
    const violations = this.blockers(step);
    if (violations.length > 0) {
      return { status: "invalid", source: "client", violations };
    }
    const body = this.form(step)!.body();
    this.lastBody[step] = body;
    return this.send(step, body);
  }

  /** Resubmit the last attempted payload after a transport failure.
   * Uses the same expected_revision; a conflict is then reconciled
   * against the server instead of being resubmitted blindly. */
  async retry(step: StepKind): Promise<SubmitOutcome> {
    const body = this.lastBody[step];
    if (body === undefined) return this.submit(step);
    const outcome = await this.send(step, body);
    if (outcome.status !== "conflict") return outcome;
    return this.reconcile(step, body, outcome);
  }

  private async send(step: StepKind, body: StepBody): Promise<SubmitOutcome> {
    let result: StepAccepted;
    try {
      result = await this.client.submitStep(
        this.annotatorId,
        this.itemId,
        step,
        this.revisions[step],
        body,
      );
    } catch (err) {
      if (err instanceof NetworkError) {
        return { status: "retryable", message: err.message };
      }
      if (err instanceof ApiError && err.kind === "validation") {
        return { status: "invalid", source: "server", violations: err.violations };
      }
      if (err instanceof ApiError && err.kind === "conflict") {
        return { status: "conflict", message: err.message };
      }
      throw err;
    }
    this.adopt(step, body, result.revision, result.current_step);
    return { status: "accepted", result };
  }

  /** A conflicting retry either means our lost submission landed (the
   * stored payload is ours) or someone else wrote the step. */
  private async reconcile(
    step: StepKind,
    body: StepBody,
    conflict: SubmitOutcome & { status: "conflict" },
  ): Promise<SubmitOutcome> {
    const view = await this.client.nextItem(this.annotatorId);
    if (view !== null && view.item_id === this.itemId) {
      const stored = view.prior[step];
      if (stored !== undefined && JSON.stringify(stored) === JSON.stringify(body)) {
        this.revisions = { ...view.revisions };
        this.adopt(step, body, view.revisions[step], view.current_step);
        return {
          status: "accepted",
          recovered: true,
          result: {
            item_id: this.itemId,
            step,
            revision: view.revisions[step],
            current_step: view.current_step,
          },
        };
      }
      return conflict;
    }
    // the item no longer comes up: it is finished (or the session moved on)
    const progress = await this.client.progress(this.annotatorId);
    const stage = progress.items[this.itemId];
    if (stage !== undefined && stageIndex(stage) > stageIndex(step)) {
      this.stage = stage;
      this.revisions[step] += 1;
      this.adopt(step, body, this.revisions[step], stage);
      return {
        status: "accepted",
        recovered: true,
        result: {
          item_id: this.itemId,
          step,
          revision: this.revisions[step],
          current_step: stage,
        },
      };
    }
    return conflict;
  }

  private adopt(step: StepKind, body: StepBody, revision: number, stage: ItemStage): void {
    this.revisions[step] = revision;
    this.stage = stage;
    if (step === "extraction") this.accepted.extraction = body as ExtractionStepBody;
    else if (step === "answers") this.accepted.answers = body as AnswersStepBody;
    else this.accepted.scoring = body as ScoringStepBody;
    this.rebuildDownstream();
  }

  /** Downstream forms follow the accepted documents: answer rows exist per
   * question, verdict rows echo the answers.  Unsubmitted edits in a form
   * survive as its prior when the rebuild keys still match. */
  private rebuildDownstream(): void {
    const extraction = this.accepted.extraction?.extraction;
    if (extraction === undefined) return;
    this.answers = AnswersForm.fromExtraction(
      extraction,
      this.answers !== null ? this.answers.body() : this.accepted.answers,
    );
    const answers = this.accepted.answers;
    if (answers === undefined) {
      this.scoring = null;
      return;
    }
    this.scoring = ScoringForm.fromAnswers(
      extraction,
      answers,
      this.scoring !== null ? this.scoring.body() : this.accepted.scoring,
    );
  }
}

export class AnnotationSession {
  progress: Progress | null = null;

  constructor(
    readonly client: AnnotationClient,
    readonly annotatorId: string,
  ) {}

  /** Create or resume the session; returns current progress. */
  async start(): Promise<Progress> {
    this.progress = await this.client.createSession(this.annotatorId);
    return this.progress;
  }

  /** Workflow for the next unfinished item, or null when done. */
  async next(): Promise<ItemWorkflow | null> {
    const view = await this.client.nextItem(this.annotatorId);
    if (view === null) return null;
    return new ItemWorkflow(this.client, this.annotatorId, view);
  }

  async refresh(): Promise<Progress> {
    this.progress = await this.client.progress(this.annotatorId);
    return this.progress;
  }
}
