/** Wire types for the annotation API.
 *
 * These mirror the server's JSON shapes field for field; nothing here is
 * derived or renamed.  Step payloads are versioned with `schema_version`
 * and the server rejects anything it does not recognize, so a shape change
 * on either side surfaces immediately.
 */

export const PAYLOAD_VERSION = 1;

export type StepKind = "extraction" | "answers" | "scoring";

/** An item's stage is the next step it needs, or "done". */
export type ItemStage = StepKind | "done";

export const STEP_ORDER: readonly StepKind[] = ["extraction", "answers", "scoring"];

export type QuestionKind = "appearance" | "intrinsic" | "relationship";

export type Dimension = "appearance" | "intrinsic" | "relationship" | "overall";

export const DIMENSIONS: readonly Dimension[] = [
  "appearance",
  "intrinsic",
  "relationship",
  "overall",
];

export const SCORE_MIN = 0;
export const SCORE_MAX = 10;

export interface PromptWire {
  id: string;
  text: string;
  source: string;
}

export interface ImageWire {
  id: string;
  uri: string;
  generator: string;
}

export interface AttributePairWire {
  attr_type: string;
  value: string;
}

export interface EntityWire {
  name: string;
  attributes: AttributePairWire[];
}

export interface RelationshipWire {
  rel_type: string;
  entities_involved: string[];
  value: string;
}

export interface QuestionWire {
  qid: string;
  kind: QuestionKind;
  text: string;
  subject_entities: string[];
}

export interface ExtractionWire {
  entities: EntityWire[];
  relationships: RelationshipWire[];
  questions: QuestionWire[];
}

/** `score` is always present on the wire; null means unset. */
export interface AnswerWire {
  qid: string;
  text: string;
  score: number | null;
}

export interface CaptionWire {
  entity: string;
  caption: string;
}

export interface VerdictWire {
  qid: string;
  answer: string;
  explanation: string;
  score: number;
}

export interface SummaryWire {
  dimension: Dimension;
  explanation: string;
  score: number;
}

export interface ExtractionStepBody {
  schema_version: number;
  extraction: ExtractionWire;
}

export interface AnswersStepBody {
  schema_version: number;
  captions: CaptionWire[];
  answers: AnswerWire[];
}

export interface ScoringStepBody {
  schema_version: number;
  verdicts: VerdictWire[];
  summaries: SummaryWire[];
}

export type StepBody = ExtractionStepBody | AnswersStepBody | ScoringStepBody;

/** One unfinished item as served by GET .../next. */
export interface ItemView {
  done: false;
  item_id: string;
  prompt: PromptWire;
  image: ImageWire;
  current_step: ItemStage;
  revisions: Record<StepKind, number>;
  prior: Partial<Record<StepKind, StepBody>>;
  prefill?: ExtractionWire;
}

export interface Progress {
  annotator_id: string;
  total: number;
  done: number;
  items: Record<string, ItemStage>;
}

/** Server acknowledgement of an accepted step revision. */
export interface StepAccepted {
  item_id: string;
  step: StepKind;
  revision: number;
  current_step: ItemStage;
}

/** One exported evaluation record (full server shape; the UI only reads it). */
export interface RecordWire {
  prompt: PromptWire;
  image: ImageWire;
  extraction: ExtractionWire | null;
  captions: CaptionWire[];
  answers: AnswerWire[];
  verdicts: VerdictWire[];
  summaries: SummaryWire[];
  [key: string]: unknown;
}

export interface ExportBundle {
  records: Record<string, RecordWire[]>;
}
