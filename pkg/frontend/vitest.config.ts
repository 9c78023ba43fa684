import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    globalSetup: ["tests/setup.ts"],
    testTimeout: 60_000,
    hookTimeout: 150_000,
    pool: "forks",
    maxConcurrency: 1,
    fileParallelism: false,
  },
});
