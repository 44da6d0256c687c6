/** Toy "translator": reverses the word order of each input. */
import { serve } from "../adapter.js";

const params = process.argv[2] !== undefined ? Number(process.argv[2]) : 0;

process.exit(
  await serve({
    predict: (inputs) =>
      inputs.map((s) => s.split(/\s+/).filter(Boolean).reverse().join(" ")),
    params,
    name: "word-reverser",
  }),
);
