// Thin REST client over the documented service endpoints; nothing else.

import type { BankSnapshot, JobInfo, SessionInfo, TrajectoryListing } from "./types.js";

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!response.ok) throw new Error(`GET ${path} -> ${response.status}`);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw new Error(`POST ${path} -> ${response.status}`);
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.get("/healthz");
  }

  createSession(body: Record<string, unknown> = {}): Promise<{ session_id: string }> {
    return this.post("/v1/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.get(`/v1/sessions/${sessionId}`);
  }

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/v1/sessions/${sessionId}/events`;
  }

  postAnswer(sessionId: string, text: string): Promise<SessionInfo> {
    return this.post(`/v1/sessions/${sessionId}/answer`, { text });
  }

  getJob(jobId: string): Promise<JobInfo> {
    return this.get(`/v1/jobs/${jobId}`);
  }

  getTrajectories(jobId: string, taskId?: string): Promise<TrajectoryListing[]> {
    const query = taskId ? `?task_id=${encodeURIComponent(taskId)}` : "";
    return this.get(`/v1/jobs/${jobId}/trajectories${query}`);
  }

  listBankEpochs(runId: string): Promise<{ run_id: string; epochs: number[] }> {
    return this.get(`/v1/banks/${runId}`);
  }

  getBank(runId: string, epoch: number): Promise<BankSnapshot> {
    return this.get(`/v1/banks/${runId}/${epoch}`);
  }
}
