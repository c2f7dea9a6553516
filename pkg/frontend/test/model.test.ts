import { describe, expect, it } from "vitest";

import type { PendingItem } from "../src/api.js";
import { formatMicros, statLines, toViews } from "../src/model.js";

function item(id: string, received: number, deadline: number): PendingItem {
  return { request_id: id, principal_id: "alice", service: "Echo", received, deadline };
}

describe("toViews", () => {
  it("computes ticking non-negative countdowns", () => {
    const views = toViews([item("a", 0, 30)], 12.4);
    expect(views).toHaveLength(1);
    expect(views[0].seconds_remaining).toBe(18);
  });

  it("never renders a negative countdown", () => {
    const views = toViews([item("a", 0, 10)], 9.999);
    expect(views[0].seconds_remaining).toBeGreaterThanOrEqual(0);
  });

  it("drops items at or past their deadline", () => {
    expect(toViews([item("a", 0, 10)], 10)).toHaveLength(0);
    expect(toViews([item("a", 0, 10)], 11)).toHaveLength(0);
  });

  it("orders oldest request first", () => {
    const views = toViews([item("b", 5, 100), item("a", 1, 100)], 0);
    expect(views.map((v) => v.request_id)).toEqual(["a", "b"]);
  });
});

describe("formatMicros", () => {
  it("scales units", () => {
    expect(formatMicros(750)).toBe("750 us");
    expect(formatMicros(12_500)).toBe("12.5 ms");
    expect(formatMicros(3_100_000)).toBe("3.10 s");
  });
});

describe("statLines", () => {
  it("is empty without stats", () => {
    expect(statLines(null)).toEqual([]);
  });

  it("surfaces the two derived totals first", () => {
    const lines = statLines({ t_mwsp: 3_000_000, t_mwsse: 1_500_000, t_reqdc: 200 });
    expect(lines[0].label).toContain("t_mwsp");
    expect(lines[0].value).toBe("3.00 s");
    expect(lines[1].label).toContain("t_mwsse");
  });
});
