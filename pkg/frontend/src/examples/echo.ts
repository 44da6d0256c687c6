/** Echo model: outputs are the inputs, unchanged. Usage: echo.js [params] [name] */
import { serve } from "../adapter.js";

const params = process.argv[2] !== undefined ? Number(process.argv[2]) : 0;
const name = process.argv[3] ?? "echo";

process.exit(
  await serve({
    predict: (inputs) => inputs,
    params,
    name,
  }),
);
