/** The single-page operator console.
 *
 * All state lives server-side; this page only polls `/admin/pending` and
 * `/admin/stats` (one second, at most one poll in flight), ticks the
 * countdowns locally between polls, and fires decisions/busy toggles.
 * Losing the host shows a banner and keeps polling.
 */

import { AdminAuthError, AdminClient, PendingItem, StatsPayload } from "./api.js";
import { statLines, toViews } from "./model.js";

export interface AppOptions {
  pollMs?: number;
  tickMs?: number;
  now?: () => number; // epoch seconds, injectable for tests
}

export class ConsoleApp {
  private items: PendingItem[] = [];
  private stats: StatsPayload | null = null;
  private connected = true;
  private busy = false;
  private notice = "";
  private pollInFlight = false;
  private pollTimer: ReturnType<typeof setInterval> | undefined;
  private tickTimer: ReturnType<typeof setInterval> | undefined;
  private readonly pollMs: number;
  private readonly tickMs: number;
  private readonly now: () => number;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: AdminClient,
    options: AppOptions = {},
  ) {
    this.pollMs = options.pollMs ?? 1000;
    this.tickMs = options.tickMs ?? 250;
    this.now = options.now ?? (() => Date.now() / 1000);
  }

  start(): void {
    this.root.innerHTML = `
      <div id="banner" hidden></div>
      <div id="notice" hidden></div>
      <section>
        <h2>Pending approvals</h2>
        <table id="pending"><tbody></tbody></table>
        <p id="empty" hidden>No requests waiting.</p>
      </section>
      <section>
        <h2>Provider state</h2>
        <label><input type="checkbox" id="busy"> Busy (refuse new requests immediately)</label>
      </section>
      <section>
        <h2>Latest invocation</h2>
        <dl id="stats"></dl>
        <p id="stats-note">Host-side phases; client and transmission shares are not observable here.</p>
      </section>`;
    this.root.querySelector<HTMLInputElement>("#busy")!.addEventListener("change", (event) => {
      void this.onBusyToggle((event.target as HTMLInputElement).checked);
    });
    void this.poll();
    this.pollTimer = setInterval(() => void this.poll(), this.pollMs);
    this.tickTimer = setInterval(() => this.renderPending(), this.tickMs);
  }

  stop(): void {
    if (this.pollTimer !== undefined) clearInterval(this.pollTimer);
    if (this.tickTimer !== undefined) clearInterval(this.tickTimer);
  }

  private async poll(): Promise<void> {
    if (this.pollInFlight) return;
    this.pollInFlight = true;
    try {
      const [items, stats] = await Promise.all([this.client.pending(), this.client.stats()]);
      this.items = items;
      this.stats = stats;
      this.connected = true;
    } catch (error) {
      this.connected = false;
      if (error instanceof AdminAuthError) this.notice = error.message;
    } finally {
      this.pollInFlight = false;
      this.render();
    }
  }

  private async onDecide(requestId: string, outcome: "Approved" | "Denied"): Promise<void> {
    try {
      const result = await this.client.decide(requestId, outcome);
      this.notice = result === "already_decided"
        ? `Request ${requestId.slice(0, 8)}… was already settled (deadline or another operator).`
        : "";
    } catch (error) {
      this.notice = String(error);
    }
    await this.poll(); // reflect the server's view right away
  }

  private async onBusyToggle(flag: boolean): Promise<void> {
    try {
      this.busy = await this.client.setBusy(flag);
      this.notice = "";
    } catch (error) {
      this.notice = String(error);
    }
    this.render();
  }

  private render(): void {
    const banner = this.root.querySelector<HTMLElement>("#banner")!;
    banner.hidden = this.connected;
    banner.textContent = this.connected ? "" : "Host unreachable - retrying…";
    const notice = this.root.querySelector<HTMLElement>("#notice")!;
    notice.hidden = this.notice === "";
    notice.textContent = this.notice;
    this.root.querySelector<HTMLInputElement>("#busy")!.checked = this.busy;
    this.renderPending();
    this.renderStats();
  }

  private renderPending(): void {
    const body = this.root.querySelector<HTMLTableSectionElement>("#pending tbody")!;
    const views = toViews(this.items, this.now());
    this.root.querySelector<HTMLElement>("#empty")!.hidden = views.length > 0;
    body.innerHTML = "";
    for (const view of views) {
      const row = document.createElement("tr");
      row.dataset.requestId = view.request_id;
      row.innerHTML = `
        <td>${view.principal_id}</td>
        <td>${view.service}</td>
        <td class="countdown">${view.seconds_remaining}s</td>`;
      for (const outcome of ["Approved", "Denied"] as const) {
        const cell = document.createElement("td");
        const button = document.createElement("button");
        button.textContent = outcome === "Approved" ? "Approve" : "Deny";
        button.className = outcome.toLowerCase();
        button.addEventListener("click", () => void this.onDecide(view.request_id, outcome));
        cell.appendChild(button);
        row.appendChild(cell);
      }
      body.appendChild(row);
    }
  }

  private renderStats(): void {
    const list = this.root.querySelector<HTMLElement>("#stats")!;
    list.innerHTML = "";
    for (const line of statLines(this.stats?.latest ?? null)) {
      const term = document.createElement("dt");
      term.textContent = line.label;
      const detail = document.createElement("dd");
      detail.textContent = line.value;
      list.append(term, detail);
    }
  }
}
