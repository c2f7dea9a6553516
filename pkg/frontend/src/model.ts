/** Pure view logic: countdowns, expiry filtering, stat formatting. */

import type { PendingItem, PhaseStats } from "./api.js";

export interface PendingView extends PendingItem {
  seconds_remaining: number;
}

/**
 * Items still decidable at `nowSeconds`, oldest first, with a ticking
 * non-negative countdown. Items past their deadline are dropped entirely:
 * the console never renders a decision control for an expired request.
 */
export function toViews(items: PendingItem[], nowSeconds: number): PendingView[] {
  return items
    .filter((item) => item.deadline > nowSeconds)
    .sort((a, b) => a.received - b.received)
    .map((item) => ({
      ...item,
      seconds_remaining: Math.max(0, Math.ceil(item.deadline - nowSeconds)),
    }));
}

/** Microseconds to a compact human figure. */
export function formatMicros(us: number): string {
  if (us >= 1_000_000) return `${(us / 1_000_000).toFixed(2)} s`;
  if (us >= 1_000) return `${(us / 1_000).toFixed(1)} ms`;
  return `${Math.round(us)} us`;
}

export interface StatLine {
  label: string;
  value: string;
}

const HEADLINE_FIELDS: ReadonlyArray<[string, string]> = [
  ["t_mwsp", "total invocation"],
  ["t_mwsse", "security effort"],
  ["t_reqdc", "request decrypt"],
  ["t_resec", "response encrypt"],
  ["t_process", "service handler"],
];

export function statLines(stats: PhaseStats | null): StatLine[] {
  if (!stats) return [];
  return HEADLINE_FIELDS.filter(([key]) => key in stats).map(([key, label]) => ({
    label: `${label} (${key})`,
    value: formatMicros(stats[key]),
  }));
}
