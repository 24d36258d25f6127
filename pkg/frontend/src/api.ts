/** HTTP client for the annotation service.
 *
 * Every server failure becomes a typed ApiError carrying the status and,
 * for validation failures, the field-by-field violations.  Transport
 * failures (server unreachable, connection dropped mid-request) become
 * NetworkError so callers can tell "rejected" from "unknown whether it
 * landed" and retry accordingly.
 */

import { FieldError } from "./validate.js";
import {
  ExportBundle,
  ItemView,
  Progress,
  StepAccepted,
  StepBody,
  StepKind,
} from "./types.js";

export const TOKEN_HEADER = "x-annotation-token";

/** Subset of fetch the client needs; injectable for tests. */
export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
}

export interface HttpRequest {
  method: string;
  headers: Record<string, string>;
  body?: string;
}

export type FetchLike = (url: string, init: HttpRequest) => Promise<HttpResponse>;

export type ApiErrorKind =
  | "auth"
  | "bad_request"
  | "not_found"
  | "conflict"
  | "validation"
  | "server";

const KIND_BY_STATUS: Record<number, ApiErrorKind> = {
  400: "bad_request",
  401: "auth",
  404: "not_found",
  409: "conflict",
  422: "validation",
};

export class ApiError extends Error {
  readonly kind: ApiErrorKind;
  readonly status: number;
  readonly violations: FieldError[];

  constructor(kind: ApiErrorKind, status: number, message: string, violations: FieldError[] = []) {
    super(message);
    this.name = "ApiError";
    this.kind = kind;
    this.status = status;
    this.violations = violations;
  }
}

/** The request may or may not have reached the server. */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkError";
  }
}

function asViolations(detail: unknown): FieldError[] {
  if (!Array.isArray(detail)) return [];
  const out: FieldError[] = [];
  for (const entry of detail) {
    if (typeof entry !== "object" || entry === null) continue;
    const e = entry as Record<string, unknown>;
    if (typeof e.field === "string" && typeof e.message === "string") {
      out.push({ field: e.field, message: e.message });
    } else if (Array.isArray(e.loc) && typeof e.msg === "string") {
      // request-shape errors from the framework itself use loc/msg
      out.push({ field: e.loc.join("."), message: e.msg });
    }
  }
  return out;
}

export interface ClientOptions {
  baseUrl: string;
  token?: string;
  fetchImpl?: FetchLike;
}

export class AnnotationClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: FetchLike;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.token !== undefined) headers[TOKEN_HEADER] = this.token;
    let response: HttpResponse;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(err instanceof Error ? err.message : String(err));
    }
    let parsed: unknown = null;
    try {
      parsed = await response.json();
    } catch {
      // non-JSON error bodies fall through with parsed = null
    }
    if (response.status < 300) return parsed;

    const detail = (parsed as { detail?: unknown } | null)?.detail;
    const kind = KIND_BY_STATUS[response.status] ?? "server";
    const violations = asViolations(detail);
    const message =
      typeof detail === "string"
        ? detail
        : violations.map((v) => `${v.field}: ${v.message}`).join("; ") ||
          `request failed with status ${response.status}`;
    throw new ApiError(kind, response.status, message, violations);
  }

  async health(): Promise<{ status: string; items: number }> {
    return (await this.request("GET", "/api/health")) as { status: string; items: number };
  }

  /** Idempotent: an existing annotator resumes and gets their progress. */
  async createSession(annotatorId: string): Promise<Progress> {
    return (await this.request("POST", "/api/session", {
      annotator_id: annotatorId,
    })) as Progress;
  }

  /** The next unfinished item, or null when the annotator is done. */
  async nextItem(annotatorId: string): Promise<ItemView | null> {
    const view = (await this.request(
      "GET",
      `/api/session/${encodeURIComponent(annotatorId)}/next`,
    )) as { done: boolean };
    return view.done ? null : (view as unknown as ItemView);
  }

  async progress(annotatorId: string): Promise<Progress> {
    return (await this.request(
      "GET",
      `/api/session/${encodeURIComponent(annotatorId)}/progress`,
    )) as Progress;
  }

  async submitStep(
    annotatorId: string,
    itemId: string,
    step: StepKind,
    expectedRevision: number,
    payload: StepBody,
  ): Promise<StepAccepted> {
    return (await this.request(
      "POST",
      `/api/session/${encodeURIComponent(annotatorId)}/items/${encodeURIComponent(itemId)}/steps/${step}`,
      { expected_revision: expectedRevision, payload },
    )) as StepAccepted;
  }

  async exportRecords(annotatorId?: string): Promise<ExportBundle> {
    const query =
      annotatorId === undefined ? "" : `?annotator_id=${encodeURIComponent(annotatorId)}`;
    return (await this.request("GET", `/api/export${query}`)) as ExportBundle;
  }

  /** Where the item's image is served (token travels in the header, so
   * this only works directly in <img> when the service runs tokenless). */
  imageUrl(itemId: string): string {
    return `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}/image`;
  }
}
