/** Always-failing model: the callback throws on every batch (error-path fixture). */
import { serve } from "../adapter.js";

process.exit(
  await serve({
    predict: () => {
      throw new Error("injected callback failure");
    },
    params: 0,
    name: "failing",
  }),
);
