import { defineConfig } from "vitest/config";

// The global setup boots a real annotation service (seeded through the
// oracle pipeline) that the e2e suite talks to, so files run serially.
export default defineConfig({
  test: {
    environment: "node",
    globalSetup: "./test/globalSetup.ts",
    fileParallelism: false,
    testTimeout: 120_000,
    hookTimeout: 180_000,
  },
});
