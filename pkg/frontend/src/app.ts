/** Browser wiring: renders the three step panels for one item at a time
 * and walks the annotator through the session.
 *
 * All state lives in AnnotationSession/ItemWorkflow; this file only maps
 * DOM events onto form mutations and re-renders.  Connection settings come
 * from the query string (?api=...&token=...&annotator=...) so the page can
 * be served as a plain static file next to any running annotation service.
 */

import { AnnotationClient } from "./api.js";
import { AnnotationSession, ItemWorkflow, SubmitOutcome } from "./controller.js";
import { AnswersForm, ScoringForm } from "./forms.js";
import { FieldError } from "./validate.js";
import { SCORE_MAX, SCORE_MIN, STEP_ORDER, StepKind } from "./types.js";

const STEP_TITLES: Record<StepKind, string> = {
  extraction: "1. Review the extraction",
  answers: "2. Answer against the image",
  scoring: "3. Judge the answers",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

function scoreSelect(value: number | null, allowUnset: boolean, onChange: (v: number | null) => void): HTMLSelectElement {
  const select = el("select", { class: "score" });
  if (allowUnset) select.append(el("option", { value: "" }, "no score"));
  for (let s = SCORE_MIN; s <= SCORE_MAX; s++) {
    select.append(el("option", { value: String(s) }, String(s)));
  }
  select.value = value === null ? "" : String(value);
  select.addEventListener("change", () => {
    onChange(select.value === "" ? null : Number(select.value));
  });
  return select;
}

function violationList(violations: FieldError[]): HTMLElement {
  const box = el("ul", { class: "violations" });
  for (const v of violations) {
    box.append(el("li", {}, el("code", {}, v.field), ` ${v.message}`));
  }
  return box;
}

class App {
  private readonly root: HTMLElement;
  private readonly client: AnnotationClient;
  private readonly session: AnnotationSession;
  private workflow: ItemWorkflow | null = null;
  private notice: { kind: "error" | "info"; text: string; retryStep?: StepKind } | null = null;

  constructor(root: HTMLElement, client: AnnotationClient, annotatorId: string) {
    this.root = root;
    this.client = client;
    this.session = new AnnotationSession(client, annotatorId);
  }

  async run(): Promise<void> {
    await this.session.start();
    await this.advance();
  }

  private async advance(): Promise<void> {
    await this.session.refresh();
    this.workflow = await this.session.next();
    this.render();
  }

  private async onSubmit(step: StepKind): Promise<void> {
    if (this.workflow === null) return;
    const outcome = await this.workflow.submit(step);
    await this.applyOutcome(step, outcome);
  }

  private async onRetry(step: StepKind): Promise<void> {
    if (this.workflow === null) return;
    const outcome = await this.workflow.retry(step);
    await this.applyOutcome(step, outcome);
  }

  private async applyOutcome(step: StepKind, outcome: SubmitOutcome): Promise<void> {
    this.notice = null;
    if (outcome.status === "accepted") {
      if (outcome.result.current_step === "done") {
        await this.advance();
        return;
      }
      if (outcome.recovered) {
        this.notice = { kind: "info", text: "Earlier submission had already landed; nothing was duplicated." };
      }
    } else if (outcome.status === "conflict") {
      this.notice = {
        kind: "error",
        text: `Another window changed this step (${outcome.message}). Reload to continue.`,
      };
    } else if (outcome.status === "retryable") {
      this.notice = {
        kind: "error",
        text: `Connection failed (${outcome.message}).`,
        retryStep: step,
      };
    }
    // invalid outcomes re-render with the violations inline
    this.render();
  }

  private render(): void {
    this.root.replaceChildren();
    const progress = this.session.progress;
    if (progress !== null) {
      this.root.append(
        el(
          "header",
          {},
          el("strong", {}, progress.annotator_id),
          el("span", { class: "count" }, ` ${progress.done} / ${progress.total} items done`),
        ),
      );
    }
    if (this.notice !== null) {
      const banner = el("div", { class: `banner ${this.notice.kind}` }, this.notice.text);
      const retryStep = this.notice.retryStep;
      if (retryStep !== undefined) {
        const button = el("button", { type: "button" }, "Retry");
        button.addEventListener("click", () => void this.onRetry(retryStep));
        banner.append(" ", button);
      }
      this.root.append(banner);
    }
    if (this.workflow === null) {
      this.root.append(el("p", { class: "done" }, "All items are finished. Thank you!"));
      return;
    }
    this.root.append(this.renderItem(this.workflow));
  }

  private renderItem(wf: ItemWorkflow): HTMLElement {
    const box = el("main", {});
    box.append(
      el(
        "section",
        { class: "item" },
        el("h2", {}, wf.itemId),
        el("p", { class: "prompt" }, wf.prompt.text),
        this.renderImage(wf),
      ),
    );
    for (const step of STEP_ORDER) {
      box.append(this.renderStep(wf, step));
    }
    return box;
  }

  private renderImage(wf: ItemWorkflow): HTMLElement {
    const img = el("img", { alt: "image under evaluation", class: "subject" });
    // the token travels in a header, so the image is fetched, not linked
    void fetch(this.client.imageUrl(wf.itemId), {
      headers: this.tokenHeaders(),
    })
      .then(async (r) => (r.ok ? r.blob() : null))
      .then((blob) => {
        if (blob !== null) img.src = URL.createObjectURL(blob);
      })
      .catch(() => undefined);
    return img;
  }

  private tokenHeaders(): Record<string, string> {
    const params = new URLSearchParams(window.location.search);
    const token = params.get("token");
    return token === null ? {} : { "x-annotation-token": token };
  }

  private renderStep(wf: ItemWorkflow, step: StepKind): HTMLElement {
    const active = wf.stage === step;
    const reached = wf.revisions[step] > 0 || active;
    const panel = el("section", { class: `step ${active ? "active" : reached ? "submitted" : "locked"}` });
    panel.append(el("h3", {}, STEP_TITLES[step], reached && !active ? " (submitted)" : ""));
    if (!reached) {
      panel.append(el("p", { class: "hint" }, "Locked until the previous step is submitted."));
      return panel;
    }
    if (step === "extraction") panel.append(this.renderExtraction(wf));
    else if (step === "answers" && wf.answers !== null) panel.append(this.renderAnswers(wf.answers));
    else if (step === "scoring" && wf.scoring !== null) panel.append(this.renderScoring(wf.scoring));

    const blockers = wf.blockers(step);
    if (blockers.length > 0) panel.append(violationList(blockers));
    const submit = el("button", { type: "button", class: "submit" }, wf.revisions[step] > 0 ? "Resubmit" : "Submit");
    if (blockers.length > 0) submit.setAttribute("disabled", "");
    submit.addEventListener("click", () => void this.onSubmit(step));
    panel.append(submit);
    return panel;
  }

  private renderExtraction(wf: ItemWorkflow): HTMLElement {
    const box = el("div", { class: "extraction" });
    box.append(
      el(
        "p",
        { class: "hint" },
        wf.extraction.seed === "prefill"
          ? "Machine extraction below. Correct anything wrong, then submit."
          : "Review the extraction, correct anything wrong, then submit.",
      ),
    );
    // structured JSON editing keeps the whole document correctable in place
    const editor = el("textarea", { class: "doc", rows: "18", spellcheck: "false" });
    editor.value = JSON.stringify(wf.extraction.doc, null, 2);
    editor.addEventListener("change", () => {
      try {
        wf.extraction.doc = JSON.parse(editor.value);
        this.render();
      } catch {
        editor.classList.add("invalid");
      }
    });
    box.append(editor);
    return box;
  }

  private renderAnswers(form: AnswersForm): HTMLElement {
    const box = el("div", { class: "answers" });
    for (const row of form.rows) {
      const line = el("div", { class: "row" });
      line.append(
        el("label", {}, el("span", { class: `kind ${row.kind}` }, row.kind), " ", row.question),
      );
      const input = el("textarea", { rows: "2" });
      input.value = row.text;
      input.addEventListener("change", () => {
        form.setText(row.qid, input.value);
        this.render();
      });
      line.append(input);
      if (row.kind === "appearance") {
        line.append(
          el("label", { class: "score-label" }, "score "),
          scoreSelect(row.score, true, (v) => {
            form.setScore(row.qid, v);
            this.render();
          }),
        );
      }
      box.append(line);
    }
    return box;
  }

  private renderScoring(form: ScoringForm): HTMLElement {
    const box = el("div", { class: "scoring" });
    for (const row of form.verdicts) {
      const line = el("div", { class: "row" });
      line.append(
        el("label", {}, el("span", { class: `kind ${row.kind}` }, row.kind), " ", row.question),
        el("p", { class: "echo" }, `answered: ${row.answer || "(blank)"}`),
      );
      const input = el("textarea", { rows: "2", placeholder: "why this score" });
      input.value = row.explanation;
      input.addEventListener("change", () => {
        form.setVerdict(row.qid, input.value, row.score);
        this.render();
      });
      line.append(
        input,
        scoreSelect(row.score, false, (v) => {
          form.setVerdict(row.qid, row.explanation, v ?? 0);
          this.render();
        }),
      );
      box.append(line);
    }
    box.append(el("h4", {}, "Dimension summaries"));
    for (const row of form.summaries) {
      const line = el("div", { class: "row summary" });
      line.append(el("label", {}, row.dimension));
      const input = el("textarea", { rows: "1", placeholder: "optional note" });
      input.value = row.explanation;
      input.addEventListener("change", () => {
        form.setSummary(row.dimension, input.value, row.score);
        this.render();
      });
      line.append(
        input,
        scoreSelect(row.score, false, (v) => {
          form.setSummary(row.dimension, row.explanation, v ?? 0);
          this.render();
        }),
      );
      box.append(line);
    }
    return box;
  }
}

function connect(): void {
  const root = document.getElementById("app");
  if (root === null) return;
  const params = new URLSearchParams(window.location.search);
  const annotator = params.get("annotator");
  if (annotator === null || annotator.trim() === "") {
    root.replaceChildren(
      el(
        "form",
        { class: "connect", method: "get" },
        el("h2", {}, "Connect"),
        el("label", {}, "annotator id ", el("input", { name: "annotator", required: "" })),
        el("label", {}, "api base ", el("input", { name: "api", placeholder: window.location.origin })),
        el("label", {}, "token ", el("input", { name: "token" })),
        el("button", { type: "submit" }, "Start"),
      ),
    );
    return;
  }
  const client = new AnnotationClient({
    baseUrl: params.get("api") ?? window.location.origin,
    token: params.get("token") ?? undefined,
  });
  const app = new App(root, client, annotator.trim());
  void app.run().catch((err: unknown) => {
    root.replaceChildren(
      el("div", { class: "banner error" }, `Could not start: ${err instanceof Error ? err.message : String(err)}`),
    );
  });
}

connect();
