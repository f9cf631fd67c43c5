import { ReviewApi } from "./api.js";
import { ReviewSession } from "./session.js";
import { mountReviewUi } from "./ui.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app container");
}
const reviewer = new URLSearchParams(window.location.search).get("reviewer") ?? "anonymous";
const api = new ReviewApi("");
mountReviewUi(root, api, new ReviewSession(api, window.localStorage, reviewer));
