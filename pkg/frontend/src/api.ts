/** Typed client for the capacity-planning service HTTP API.
 *
 * Every non-2xx response raises ApiError carrying the server's
 * {code, message} body so callers can surface it verbatim; network
 * failures raise ApiError with code "unreachable".
 */

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface TopologyMachine {
  host_id: string;
  core_count: number;
  clock_mhz: number;
  memory_mb: number;
}

export interface TopologyDoc {
  name: string;
  clusters: { cluster_id: string; machines: TopologyMachine[] }[];
}

export interface StoredTopology {
  id: string;
  document: TopologyDoc;
  dimensions?: CandidateInfo;
}

export interface CandidateInfo {
  id?: string;
  label: string;
  mode: string;
  quality: string;
  direction: string;
  variance: string;
  total_cores?: number;
  name?: string;
}

export interface StoredTrace {
  id: string;
  document: { path: string; format: string };
  vm_count: number;
  total_load_mflop: number;
  duration_s: number;
}

export interface RunHandle {
  id: string;
  status: "pending" | "running" | "done" | "failed";
  progress: number;
  portfolio_id?: string;
  error?: string;
}

export interface ResultRow {
  scenario_id: string;
  repetition: number;
  [metric: string]: string | number;
}

export interface PlanEntry {
  rank: number;
  scenario_id: string;
  satisfies_slos: boolean;
  violated_slos: string[];
  total_cores: number;
  justification: Record<string, number>;
}

export interface RunResults {
  run_id: string;
  portfolio_id: string;
  rows: ResultRow[];
  aggregates: Record<string, Record<string, { median: number; mean: number; std: number }>>;
  recommendation: { best_effort: boolean; entries: PlanEntry[] } | null;
}

async function request<T>(base: string, method: string, path: string, body?: unknown): Promise<T> {
  let response: Response;
  try {
    response = await fetch(base + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  } catch (err) {
    throw new ApiError(0, "unreachable", `service unreachable: ${String(err)}`);
  }
  if (!response.ok) {
    let code = "error";
    let message = `${response.status} ${response.statusText}`;
    try {
      const payload = await response.json();
      code = payload.code ?? code;
      message = payload.message ?? message;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(response.status, code, message);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(public base: string = "") {}

  metricNames(): Promise<{ metrics: string[] }> {
    return request(this.base, "GET", "/metrics/names");
  }

  listTopologies(): Promise<{ items: StoredTopology[] }> {
    return request(this.base, "GET", "/topologies");
  }

  postTopology(doc: TopologyDoc): Promise<{ id: string }> {
    return request(this.base, "POST", "/topologies", doc);
  }

  generateCandidates(topologyId: string, seed = 0): Promise<{ items: CandidateInfo[] }> {
    return request(this.base, "POST", `/topologies/${topologyId}/candidates`, { seed });
  }

  listTraces(): Promise<{ items: StoredTrace[] }> {
    return request(this.base, "GET", "/traces");
  }

  registerTrace(path: string, format: string): Promise<{ id: string }> {
    return request(this.base, "POST", "/traces", { path, format });
  }

  postPortfolio(doc: unknown): Promise<{ id: string }> {
    return request(this.base, "POST", "/portfolios", doc);
  }

  getPortfolio(id: string): Promise<{ id: string; document: Record<string, unknown> }> {
    return request(this.base, "GET", `/portfolios/${id}`);
  }

  launchRun(portfolioId: string, options: { repetitions?: number; parallelism?: number } = {}): Promise<RunHandle> {
    return request(this.base, "POST", `/portfolios/${portfolioId}/runs`, options);
  }

  getRun(runId: string): Promise<RunHandle> {
    return request(this.base, "GET", `/runs/${runId}`);
  }

  listRuns(portfolioId?: string): Promise<{ items: RunHandle[] }> {
    const suffix = portfolioId ? `?portfolio_id=${encodeURIComponent(portfolioId)}` : "";
    return request(this.base, "GET", `/runs${suffix}`);
  }

  getResults(runId: string): Promise<RunResults> {
    return request(this.base, "GET", `/runs/${runId}/results`);
  }
}
