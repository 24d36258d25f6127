/** Hand-built documents for the unit suites. */

import {
  AnswersStepBody,
  ExtractionWire,
  ItemView,
  PAYLOAD_VERSION,
  ScoringStepBody,
} from "../src/types.js";

/** Two entities, one relationship, a complete question set:
 * one appearance question per entity, one intrinsic question per
 * attribute pair (5), one relationship question. */
export function validExtraction(): ExtractionWire {
  return {
    entities: [
      {
        name: "red fox",
        attributes: [
          { attr_type: "existence", value: "yes" },
          { attr_type: "quantity", value: "1" },
          { attr_type: "color", value: "red" },
        ],
      },
      {
        name: "log",
        attributes: [
          { attr_type: "existence", value: "yes" },
          { attr_type: "quantity", value: "1" },
        ],
      },
    ],
    relationships: [
      { rel_type: "spatial", entities_involved: ["red fox", "log"], value: "on top of" },
    ],
    questions: [
      { qid: "q1", kind: "appearance", text: "Does the red fox look right?", subject_entities: ["red fox"] },
      { qid: "q2", kind: "appearance", text: "Does the log look right?", subject_entities: ["log"] },
      { qid: "q3", kind: "intrinsic", text: "Is there a red fox?", subject_entities: ["red fox"] },
      { qid: "q4", kind: "intrinsic", text: "Is there exactly 1 red fox?", subject_entities: ["red fox"] },
      { qid: "q5", kind: "intrinsic", text: "Is the fox red?", subject_entities: ["red fox"] },
      { qid: "q6", kind: "intrinsic", text: "Is there a log?", subject_entities: ["log"] },
      { qid: "q7", kind: "intrinsic", text: "Is there exactly 1 log?", subject_entities: ["log"] },
      { qid: "q8", kind: "relationship", text: "Is the fox on top of the log?", subject_entities: ["red fox", "log"] },
    ],
  };
}

export function validAnswers(extraction: ExtractionWire, score = 7): AnswersStepBody {
  return {
    schema_version: PAYLOAD_VERSION,
    captions: [],
    answers: extraction.questions.map((q) => ({
      qid: q.qid,
      text: `yes, as asked by ${q.qid}`,
      score: q.kind === "appearance" ? score : null,
    })),
  };
}

export function validScoring(
  extraction: ExtractionWire,
  answers: AnswersStepBody,
  score = 7,
): ScoringStepBody {
  const texts = new Map(answers.answers.map((a) => [a.qid, a.text]));
  return {
    schema_version: PAYLOAD_VERSION,
    verdicts: extraction.questions.map((q) => ({
      qid: q.qid,
      answer: texts.get(q.qid) ?? "",
      explanation: `consistent with the image for ${q.qid}`,
      score,
    })),
    summaries: (["appearance", "intrinsic", "relationship", "overall"] as const).map(
      (dimension) => ({ dimension, explanation: "", score }),
    ),
  };
}

export function itemView(extraction: ExtractionWire): ItemView {
  return {
    done: false,
    item_id: "p1:i1",
    prompt: { id: "p1", text: "a red fox on a log", source: "other" },
    image: { id: "i1", uri: "data:image/png;base64,", generator: "other" },
    current_step: "extraction",
    revisions: { extraction: 0, answers: 0, scoring: 0 },
    prior: {},
    prefill: extraction,
  };
}
