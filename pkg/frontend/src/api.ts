/** Typed client for the recommendation service.
 *
 * The transport is injectable so tests can intercept every request and
 * assert that the console only relays service responses.
 */

import type {
  LedgerJson,
  RecommendationSetJson,
  RunStatusJson,
  ScenarioJson,
  ScenarioRefJson,
} from "./types";

export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
}

export interface HttpRequestInit {
  method: string;
  headers?: Record<string, string>;
  body?: string;
}

export type Fetcher = (url: string, init: HttpRequestInit) => Promise<HttpResponse>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

const defaultFetcher: Fetcher = (url, init) => fetch(url, init);

export class ApiClient {
  private readonly baseUrl: string;

  constructor(
    baseUrl: string,
    private readonly fetcher: Fetcher = defaultFetcher,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: HttpRequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetcher(this.baseUrl + path, init);
    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      payload = undefined;
    }
    if (response.status >= 400) {
      const detail =
        payload && typeof payload === "object" && "detail" in payload
          ? String((payload as { detail: unknown }).detail)
          : `request failed with status ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  async listBundled(): Promise<string[]> {
    const payload = await this.request<{ scenarios: string[] }>("GET", "/bundled");
    return payload.scenarios;
  }

  getBundledScenario(name: string): Promise<ScenarioJson> {
    return this.request("GET", `/bundled/${encodeURIComponent(name)}`);
  }

  async createScenario(scenario: ScenarioJson): Promise<string> {
    const payload = await this.request<{ id: string }>("POST", "/scenarios", scenario);
    return payload.id;
  }

  async listScenarios(): Promise<ScenarioRefJson[]> {
    const payload = await this.request<{ scenarios: ScenarioRefJson[] }>("GET", "/scenarios");
    return payload.scenarios;
  }

  getScenario(id: string): Promise<ScenarioJson> {
    return this.request("GET", `/scenarios/${encodeURIComponent(id)}`);
  }

  recommend(id: string): Promise<RecommendationSetJson> {
    return this.request("POST", `/scenarios/${encodeURIComponent(id)}/recommend`);
  }

  async startValidation(id: string, reps: number, methods?: string[]): Promise<string> {
    const query = new URLSearchParams({ reps: String(reps) });
    if (methods && methods.length > 0) {
      query.set("methods", methods.join(","));
    }
    const payload = await this.request<{ run_id: string }>(
      "POST",
      `/scenarios/${encodeURIComponent(id)}/validate?${query.toString()}`,
    );
    return payload.run_id;
  }

  getRun(runId: string): Promise<RunStatusJson> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}`);
  }

  getLedger(): Promise<LedgerJson> {
    return this.request("GET", "/ledger");
  }
}
