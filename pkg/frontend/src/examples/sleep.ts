/** Sleep model: echoes after a fixed delay per batch. Usage: sleep.js <ms> */
import { serve } from "../adapter.js";

const ms = Number(process.argv[2] ?? "50");

process.exit(
  await serve({
    predict: async (inputs) => {
      await new Promise((resolve) => setTimeout(resolve, ms));
      return inputs;
    },
    params: 0,
    name: `sleep-${ms}ms`,
  }),
);
