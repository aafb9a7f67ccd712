/** Boot: wire the API client, store, and view to the page. */

import { ApiClient } from "./api.js";
import { QueueStore } from "./store.js";
import { QueueView } from "./view.js";

declare global {
  interface Window {
    __REVIEW_API_BASE__?: string;
    __REVIEW_API_TOKEN__?: string;
    __REVIEWER_ID__?: string;
  }
}

const DEFAULT_BASE = "http://127.0.0.1:8765";
const REFRESH_MS = 15_000;

export function boot(root: HTMLElement): QueueStore {
  const api = new ApiClient({
    baseUrl: window.__REVIEW_API_BASE__ ?? DEFAULT_BASE,
    ...(window.__REVIEW_API_TOKEN__ ? { token: window.__REVIEW_API_TOKEN__ } : {}),
  });
  const store = new QueueStore(api, window.__REVIEWER_ID__ ?? "reviewer-ui");
  new QueueView(root, store);
  void store.refresh();
  setInterval(() => void store.refresh(), REFRESH_MS);
  return store;
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) boot(root);
}
