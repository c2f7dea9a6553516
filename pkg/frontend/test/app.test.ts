// @vitest-environment jsdom
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { AdminClient, PendingItem } from "../src/api.js";
import { ConsoleApp } from "../src/app.js";

const SECRET = "sekrit";

interface Waiter {
  resolvedWith: string | null;
  resolvedAt: number | null;
}

/** In-memory stand-in for the host's admin API semantics. */
class FakeHost {
  pending: PendingItem[] = [];
  settled = new Map<string, string>();
  waiters = new Map<string, Waiter>();
  busy = false;
  down = false;
  pollsServed = 0;

  nowSeconds(): number {
    return Date.now() / 1000;
  }

  addPending(id: string, deadlineInSeconds: number): Waiter {
    this.pending.push({
      request_id: id,
      principal_id: "alice",
      service: "Echo",
      received: this.nowSeconds(),
      deadline: this.nowSeconds() + deadlineInSeconds,
    });
    const waiter: Waiter = { resolvedWith: null, resolvedAt: null };
    this.waiters.set(id, waiter);
    return waiter;
  }

  /** What a service request would get right now (host behavior is tested
   *  on the host side; this mirrors the busy short-circuit only). */
  simulateInvocationFault(): string | null {
    return this.busy ? "AuthzFault: authorization Busy" : null;
  }

  private sweep(): void {
    const now = this.nowSeconds();
    this.pending = this.pending.filter((item) => {
      if (item.deadline > now) return true;
      this.settled.set(item.request_id, "TimedOut");
      return false;
    });
  }

  fetch = async (input: string | URL, init?: RequestInit): Promise<Response> => {
    if (this.down) throw new TypeError("fetch failed");
    const url = new URL(String(input));
    const headers = (init?.headers ?? {}) as Record<string, string>;
    const reply = (status: number, payload: unknown): Response =>
      ({
        status,
        ok: status >= 200 && status < 300,
        json: async () => payload,
      }) as unknown as Response;

    if (headers["X-Admin-Secret"] !== SECRET) return reply(401, { error: "denied" });
    this.sweep();

    if (url.pathname === "/admin/pending") {
      this.pollsServed += 1;
      return reply(200, this.pending);
    }
    if (url.pathname === "/admin/stats") {
      return reply(200, {
        invocations: 3,
        faults: 0,
        latest: { t_mwsp: 3_000_000, t_mwsse: 1_200_000, t_reqdc: 400_000 },
        medians: { t_mwsp: 2_900_000, t_mwsse: 1_100_000 },
      });
    }
    if (url.pathname === "/admin/decision") {
      const body = JSON.parse(String(init?.body)) as { request_id: string; outcome: string };
      if (this.settled.has(body.request_id)) {
        return reply(409, { error: "already decided", kind: "AlreadyDecided" });
      }
      const index = this.pending.findIndex((p) => p.request_id === body.request_id);
      if (index < 0) return reply(404, { error: "unknown", kind: "UnknownRequestId" });
      this.pending.splice(index, 1);
      this.settled.set(body.request_id, body.outcome);
      const waiter = this.waiters.get(body.request_id);
      if (waiter) {
        waiter.resolvedWith = body.outcome;
        waiter.resolvedAt = this.nowSeconds();
      }
      return reply(200, { request_id: body.request_id, outcome: body.outcome });
    }
    if (url.pathname === "/admin/busy") {
      this.busy = (JSON.parse(String(init?.body)) as { busy: boolean }).busy;
      return reply(200, { busy: this.busy });
    }
    return reply(404, { error: "no such endpoint" });
  };
}

let host: FakeHost;
let root: HTMLElement;
let app: ConsoleApp;

function mountApp(): void {
  const client = new AdminClient("http://host.test", SECRET);
  app = new ConsoleApp(root, client, { now: () => Date.now() / 1000 });
  app.start();
}

async function settle(ms = 0): Promise<void> {
  await vi.advanceTimersByTimeAsync(ms);
}

beforeEach(() => {
  vi.useFakeTimers();
  host = new FakeHost();
  vi.stubGlobal("fetch", host.fetch);
  root = document.createElement("div");
  document.body.appendChild(root);
});

afterEach(() => {
  app?.stop();
  root.remove();
  vi.unstubAllGlobals();
  vi.useRealTimers();
});

function rows(): HTMLTableRowElement[] {
  return Array.from(root.querySelectorAll<HTMLTableRowElement>("#pending tbody tr"));
}

describe("approval queue", () => {
  it("renders a pending request with a live countdown", async () => {
    host.addPending("req-1", 30);
    mountApp();
    await settle();
    expect(rows()).toHaveLength(1);
    const countdown = rows()[0].querySelector(".countdown")!.textContent!;
    expect(Number.parseInt(countdown)).toBeGreaterThan(25);
    await settle(2000); // countdown ticks down between polls
    const later = Number.parseInt(rows()[0].querySelector(".countdown")!.textContent!);
    expect(later).toBeLessThanOrEqual(28);
  });

  it("dispatches an Approved click to the waiting invocation within 2 s", async () => {
    const waiter = host.addPending("req-2", 30);
    mountApp();
    await settle();
    const clickedAt = host.nowSeconds();
    rows()[0].querySelector<HTMLButtonElement>("button.approved")!.click();
    await settle(1000); // one poll interval is the acceptance budget
    expect(waiter.resolvedWith).toBe("Approved");
    expect(waiter.resolvedAt! - clickedAt).toBeLessThanOrEqual(2.0);
    expect(rows()).toHaveLength(0); // the item is gone from the queue
  });

  it("Deny settles the request with a denial", async () => {
    const waiter = host.addPending("req-3", 30);
    mountApp();
    await settle();
    rows()[0].querySelector<HTMLButtonElement>("button.denied")!.click();
    await settle(1000);
    expect(waiter.resolvedWith).toBe("Denied");
  });

  it("expires visually without operator action and never shows negatives", async () => {
    host.addPending("req-4", 3);
    mountApp();
    await settle();
    expect(rows()).toHaveLength(1);
    for (let step = 0; step < 16; step += 1) {
      await settle(250);
      for (const row of rows()) {
        const seconds = Number.parseInt(row.querySelector(".countdown")!.textContent!);
        expect(seconds).toBeGreaterThanOrEqual(0);
      }
    }
    expect(rows()).toHaveLength(0); // gone after deadline with no clicks
    expect(host.settled.get("req-4")).toBe("TimedOut");
  });

  it("renders a decision race as an informational notice, not an error", async () => {
    host.addPending("req-5", 30);
    mountApp();
    await settle();
    host.settled.set("req-5", "TimedOut"); // the host sweeper won the race
    host.pending = [];
    rows()[0].querySelector<HTMLButtonElement>("button.approved")!.click();
    await settle(1000);
    const notice = root.querySelector<HTMLElement>("#notice")!;
    expect(notice.hidden).toBe(false);
    expect(notice.textContent).toContain("already settled");
  });
});

describe("busy toggle", () => {
  it("is reflected in the next simulated invocation's fault", async () => {
    mountApp();
    await settle();
    expect(host.simulateInvocationFault()).toBeNull();
    const checkbox = root.querySelector<HTMLInputElement>("#busy")!;
    checkbox.checked = true;
    checkbox.dispatchEvent(new Event("change"));
    await settle();
    expect(host.busy).toBe(true);
    expect(host.simulateInvocationFault()).toContain("Busy");
    checkbox.checked = false;
    checkbox.dispatchEvent(new Event("change"));
    await settle();
    expect(host.busy).toBe(false);
  });
});

describe("connectivity", () => {
  it("shows a banner while the host is down and keeps polling", async () => {
    mountApp();
    await settle();
    expect(root.querySelector<HTMLElement>("#banner")!.hidden).toBe(true);
    host.down = true;
    await settle(1200);
    expect(root.querySelector<HTMLElement>("#banner")!.hidden).toBe(false);
    const polls = host.pollsServed;
    host.down = false;
    await settle(2400);
    expect(root.querySelector<HTMLElement>("#banner")!.hidden).toBe(true);
    expect(host.pollsServed).toBeGreaterThan(polls);
  });
});

describe("stats panel", () => {
  it("shows the derived totals from the latest invocation", async () => {
    mountApp();
    await settle();
    const text = root.querySelector<HTMLElement>("#stats")!.textContent!;
    expect(text).toContain("t_mwsp");
    expect(text).toContain("3.00 s");
    expect(text).toContain("t_mwsse");
  });
});

describe("refresh safety", () => {
  it("a re-mounted page rebuilds the same view from server state", async () => {
    host.addPending("req-6", 30);
    mountApp();
    await settle();
    expect(rows()).toHaveLength(1);
    app.stop();
    root.innerHTML = ""; // simulate refresh: all client state lost
    mountApp();
    await settle();
    expect(rows()).toHaveLength(1);
    expect(rows()[0].dataset.requestId).toBe("req-6");
  });
});
