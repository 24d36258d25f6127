/** Connection details of the live stack booted by globalSetup. */

import { readFileSync } from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";

export interface Stack {
  apiBase: string;
  token: string;
  bench: string;
  tmp: string;
  python: string;
}

const here = path.dirname(fileURLToPath(import.meta.url));

export const STACK_FILE = path.join(here, "..", ".tmp", "stack.json");

export function readStack(): Stack {
  return JSON.parse(readFileSync(STACK_FILE, "utf-8")) as Stack;
}
