import { describe, expect, it } from "vitest";

import { AnnotationClient } from "../src/api.js";
import { AnnotationSession, ItemWorkflow } from "../src/controller.js";
import { AnswersForm } from "../src/forms.js";
import {
  ItemStage,
  ItemView,
  STEP_ORDER,
  StepBody,
  StepKind,
} from "../src/types.js";
import { itemView, validExtraction } from "./fixtures.js";
import type { FetchLike, HttpResponse } from "../src/api.js";

/** In-memory stand-in for the annotation service: step gating, optimistic
 * revisions, and a scriptable fault queue.  It accepts any payload the
 * gate and revision checks let through; semantic validation is the real
 * server's job and is covered by the e2e contract suite. */
class FakeService {
  stage: ItemStage = "extraction";
  revisions: Record<StepKind, number> = { extraction: 0, answers: 0, scoring: 0 };
  stored: Partial<Record<StepKind, StepBody>> = {};
  submits = 0;
  faults: Array<"drop-before" | "drop-after" | { status: number; detail: unknown }> = [];

  constructor(private readonly view: ItemView) {}

  private json(status: number, body: unknown): HttpResponse {
    return { status, json: () => Promise.resolve(body) };
  }

  fetch: FetchLike = (url, init) => {
    const path = new URL(url).pathname;
    if (init.method === "POST" && path === "/api/session") {
      return Promise.resolve(this.json(200, this.progressBody()));
    }
    if (path.endsWith("/next")) {
      return Promise.resolve(this.json(200, this.nextBody()));
    }
    if (path.endsWith("/progress")) {
      return Promise.resolve(this.json(200, this.progressBody()));
    }
    const stepMatch = path.match(/\/steps\/(\w+)$/);
    if (stepMatch !== null && init.method === "POST") {
      return this.submit(stepMatch[1] as StepKind, JSON.parse(init.body ?? "{}"));
    }
    return Promise.resolve(this.json(404, { detail: "unknown route" }));
  };

  private submit(
    step: StepKind,
    body: { expected_revision: number; payload: StepBody },
  ): Promise<HttpResponse> {
    const fault = this.faults.shift();
    if (fault === "drop-before") {
      return Promise.reject(new TypeError("fetch failed"));
    }
    if (fault !== undefined && fault !== "drop-after") {
      return Promise.resolve(this.json(fault.status, { detail: fault.detail }));
    }
    const limit = this.stage === "done" ? STEP_ORDER.length : STEP_ORDER.indexOf(this.stage);
    if (STEP_ORDER.indexOf(step) > limit) {
      return Promise.resolve(
        this.json(422, {
          detail: [
            { field: "step", message: `step '${step}' not reached, item is at '${this.stage}'` },
          ],
        }),
      );
    }
    if (this.revisions[step] !== body.expected_revision) {
      return Promise.resolve(
        this.json(409, {
          detail:
            `step '${step}' of '${this.view.item_id}' is at revision ` +
            `${this.revisions[step]}, caller expected ${body.expected_revision}`,
        }),
      );
    }
    this.submits += 1;
    this.revisions[step] += 1;
    this.stored[step] = body.payload;
    if (step === this.stage) {
      const next = STEP_ORDER.indexOf(step) + 1;
      this.stage = next >= STEP_ORDER.length ? "done" : STEP_ORDER[next];
    }
    const result = {
      item_id: this.view.item_id,
      step,
      revision: this.revisions[step],
      current_step: this.stage,
    };
    if (fault === "drop-after") {
      return Promise.reject(new TypeError("fetch failed"));
    }
    return Promise.resolve(this.json(200, result));
  }

  private nextBody(): Record<string, unknown> {
    if (this.stage === "done") return { done: true };
    return {
      ...this.view,
      done: false,
      current_step: this.stage,
      revisions: { ...this.revisions },
      prior: { ...this.stored },
    };
  }

  private progressBody(): Record<string, unknown> {
    return {
      annotator_id: "tester",
      total: 1,
      done: this.stage === "done" ? 1 : 0,
      items: { [this.view.item_id]: this.stage },
    };
  }
}

function harness() {
  const service = new FakeService(itemView(validExtraction()));
  const client = new AnnotationClient({
    baseUrl: "http://fake",
    token: "t",
    fetchImpl: service.fetch,
  });
  const session = new AnnotationSession(client, "tester");
  return { service, client, session };
}

async function startItem(session: AnnotationSession): Promise<ItemWorkflow> {
  await session.start();
  const wf = await session.next();
  expect(wf).not.toBeNull();
  return wf!;
}

function fillAnswers(wf: ItemWorkflow, score = 7): void {
  for (const row of wf.answers!.rows) {
    wf.answers!.setText(row.qid, `observed, per ${row.qid}`);
    if (row.kind === "appearance") wf.answers!.setScore(row.qid, score);
  }
}

function fillScoring(wf: ItemWorkflow, score = 7): void {
  for (const row of wf.scoring!.verdicts) {
    wf.scoring!.setVerdict(row.qid, `agrees with the image (${row.qid})`, score);
  }
  for (const row of wf.scoring!.summaries) {
    wf.scoring!.setSummary(row.dimension, "", score);
  }
}

describe("step gating", () => {
  it("refuses steps ahead of the stage without a request", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    const outcome = await wf.submit("scoring");
    expect(outcome).toEqual({
      status: "invalid",
      source: "client",
      violations: [
        { field: "step", message: "step 'scoring' not reached, item is at 'extraction'" },
      ],
    });
    expect(service.submits).toBe(0);
  });

  it("keeps an invalid form local", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    wf.extraction.doc.entities[0].attributes = [];
    const outcome = await wf.submit("extraction");
    expect(outcome.status).toBe("invalid");
    if (outcome.status === "invalid") {
      expect(outcome.source).toBe("client");
      expect(outcome.violations.length).toBeGreaterThan(0);
    }
    expect(service.submits).toBe(0);
  });
});

describe("happy path", () => {
  it("walks extraction, answers, scoring to done with one request each", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    expect(wf.extraction.seed).toBe("prefill");

    const first = await wf.submit("extraction");
    expect(first.status).toBe("accepted");
    expect(wf.stage).toBe("answers");
    expect(wf.answers).not.toBeNull();
    expect(wf.answers!.rows.map((r) => r.qid)).toEqual(
      validExtraction().questions.map((q) => q.qid),
    );

    expect(wf.canSubmit("answers")).toBe(false);
    fillAnswers(wf);
    expect(wf.canSubmit("answers")).toBe(true);
    const second = await wf.submit("answers");
    expect(second.status).toBe("accepted");
    expect(wf.stage).toBe("scoring");
    expect(wf.scoring!.verdicts[0].answer).toBe("observed, per q1");

    fillScoring(wf);
    const third = await wf.submit("scoring");
    expect(third.status).toBe("accepted");
    expect(wf.stage).toBe("done");

    expect(service.submits).toBe(3);
    expect(wf.revisions).toEqual({ extraction: 1, answers: 1, scoring: 1 });
    expect(service.stored.answers).toEqual(wf.answers!.body());
    expect(await session.next()).toBeNull();

    const progress = await session.refresh();
    expect(progress.done).toBe(1);
    expect(progress.items["p1:i1"]).toBe("done");
  });
});

describe("server responses", () => {
  it("surfaces a 422 with its violations", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    service.faults.push({
      status: 422,
      detail: [{ field: "extraction.entities", message: "duplicate entity name 'red fox'" }],
    });
    const outcome = await wf.submit("extraction");
    expect(outcome).toEqual({
      status: "invalid",
      source: "server",
      violations: [{ field: "extraction.entities", message: "duplicate entity name 'red fox'" }],
    });
    expect(wf.revisions.extraction).toBe(0);
  });

  it("surfaces a conflict from another writer", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    service.faults.push({ status: 409, detail: "step 'extraction' of 'p1:i1' is at revision 1, caller expected 0" });
    const outcome = await wf.submit("extraction");
    expect(outcome.status).toBe("conflict");
    expect(wf.revisions.extraction).toBe(0);
  });
});

describe("transport failures", () => {
  it("retries a request that never landed", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    service.faults.push("drop-before");
    const dropped = await wf.submit("extraction");
    expect(dropped.status).toBe("retryable");
    expect(service.submits).toBe(0);

    const retried = await wf.retry("extraction");
    expect(retried.status).toBe("accepted");
    expect(service.submits).toBe(1);
    expect(wf.revisions.extraction).toBe(1);
    expect(wf.stage).toBe("answers");
  });

  it("reconciles a lost response instead of writing a duplicate", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    service.faults.push("drop-after");
    const dropped = await wf.submit("extraction");
    expect(dropped.status).toBe("retryable");
    expect(service.submits).toBe(1); // it landed; the response was lost

    const retried = await wf.retry("extraction");
    expect(retried.status).toBe("accepted");
    if (retried.status === "accepted") {
      expect(retried.recovered).toBe(true);
      expect(retried.result.revision).toBe(1);
    }
    expect(service.submits).toBe(1); // reconciled, not resubmitted
    expect(wf.stage).toBe("answers");
    expect(wf.revisions.extraction).toBe(1);
  });

  it("reconciles a lost response on the final step via progress", async () => {
    const { service, session } = harness();
    const wf = await startItem(session);
    await wf.submit("extraction");
    fillAnswers(wf);
    await wf.submit("answers");
    fillScoring(wf);
    service.faults.push("drop-after");
    const dropped = await wf.submit("scoring");
    expect(dropped.status).toBe("retryable");

    const retried = await wf.retry("scoring");
    expect(retried.status).toBe("accepted");
    if (retried.status === "accepted") {
      expect(retried.recovered).toBe(true);
    }
    expect(service.submits).toBe(3);
    expect(wf.stage).toBe("done");
    expect(wf.revisions.scoring).toBe(1);
  });
});

describe("forms", () => {
  it("requires scores exactly on appearance answers", () => {
    const extraction = validExtraction();
    const form = AnswersForm.fromExtraction(extraction);
    for (const row of form.rows) form.setText(row.qid, "present");
    const ctx = { extraction, answeredQids: null, judgedQids: null };

    expect(form.issues(ctx)).toEqual([]); // the step itself would accept this
    let messages = form.blockers(ctx).map((v) => v.message);
    expect(messages).toContain("appearance answer needs a score");

    for (const row of form.rows) form.setScore(row.qid, 5);
    messages = form.blockers(ctx).map((v) => v.message);
    expect(messages).toContain("only appearance answers carry a score");

    for (const row of form.rows) {
      form.setScore(row.qid, row.kind === "appearance" ? 5 : null);
    }
    expect(form.blockers(ctx)).toEqual([]);
  });

  it("keeps unsubmitted answer edits across an extraction resubmission", async () => {
    const { session } = harness();
    const wf = await startItem(session);
    await wf.submit("extraction");
    wf.answers!.setText("q1", "drafted already");
    wf.extraction.doc.entities[0].attributes[2].value = "rust";
    const outcome = await wf.submit("extraction");
    expect(outcome.status).toBe("accepted");
    expect(wf.revisions.extraction).toBe(2);
    expect(wf.answers!.row("q1")!.text).toBe("drafted already");
  });
});
