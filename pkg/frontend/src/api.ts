/** Thin typed client for the host's admin JSON API. */

export interface PendingItem {
  request_id: string;
  principal_id: string;
  service: string;
  received: number; // epoch seconds
  deadline: number; // epoch seconds
}

export interface PhaseStats {
  [phase: string]: number;
}

export interface StatsPayload {
  invocations: number;
  faults: number;
  latest: PhaseStats | null;
  medians: PhaseStats | null;
}

export type DecideResult = "ok" | "already_decided";

export class AdminAuthError extends Error {}

export class AdminClient {
  // the admin secret lives in memory only; a page refresh forgets it
  constructor(private readonly baseUrl: string, private readonly secret: string) {}

  private headers(): Record<string, string> {
    return { "X-Admin-Secret": this.secret, "Content-Type": "application/json" };
  }

  private async get(path: string): Promise<unknown> {
    const response = await fetch(this.baseUrl + path, { headers: this.headers() });
    if (response.status === 401) throw new AdminAuthError("admin credential rejected");
    if (!response.ok) throw new Error(`GET ${path} -> ${response.status}`);
    return response.json();
  }

  private async post(path: string, body: unknown): Promise<Response> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify(body),
    });
    if (response.status === 401) throw new AdminAuthError("admin credential rejected");
    return response;
  }

  async pending(): Promise<PendingItem[]> {
    return (await this.get("/admin/pending")) as PendingItem[];
  }

  async stats(): Promise<StatsPayload> {
    return (await this.get("/admin/stats")) as StatsPayload;
  }

  /** 409 means the deadline or another operator won the race: informational. */
  async decide(requestId: string, outcome: "Approved" | "Denied"): Promise<DecideResult> {
    const response = await this.post("/admin/decision", {
      request_id: requestId,
      outcome,
    });
    if (response.status === 409) return "already_decided";
    if (!response.ok) throw new Error(`decision -> ${response.status}`);
    return "ok";
  }

  async setBusy(busy: boolean): Promise<boolean> {
    const response = await this.post("/admin/busy", { busy });
    if (!response.ok) throw new Error(`busy -> ${response.status}`);
    const payload = (await response.json()) as { busy: boolean };
    return payload.busy;
  }
}
