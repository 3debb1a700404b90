// Typed client for the review-session API. The UI keeps no learning state
// of its own: everything rendered comes straight from these responses.

export interface SessionState {
  id: string;
  status: 'created' | 'running' | 'awaiting_answer' | 'done' | 'failed';
  outer_iteration: number;
  n_templates: number;
  budget: number;
  answered: number;
  n_queries: number;
  learning_rate: number | null;
  error: string | null;
}

export interface SupportingInstance {
  instance_id: string;
  text: string;
  posterior: number[];
}

export interface ReviewQuery {
  query_id: string;
  token: string;
  entropy: number;
  avg_posterior: number[];
  candidates: Record<string, string>;
  supporting: SupportingInstance[];
  outcome: 'pending' | 'accepted' | 'rejected';
  accepted_label: string | null;
}

export interface QueryResponse {
  pending: boolean;
  query: ReviewQuery | null;
}

export interface FactorTemplate {
  kind: string;
  weight: number;
  fixed?: boolean;
  origin: 'seed' | 'sst' | 'fal';
  describe: string;
  key: string;
}

export interface FactorsResponse {
  templates: FactorTemplate[];
  n_templates: number;
}

export interface MetricRow {
  outer: number;
  sst_iter: number;
  test_accuracy: number | null;
  q_entropy: number;
  n_templates: number;
  answered: number;
}

export interface MetricsResponse {
  metrics: MetricRow[];
}

export class ConflictError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = 'ConflictError';
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (resp.status === 409) {
    const body = await resp.json().catch(() => ({ detail: 'conflict' }));
    throw new ConflictError(String((body as { detail?: string }).detail ?? 'conflict'));
  }
  if (!resp.ok) {
    throw new Error(`HTTP ${resp.status}: ${await resp.text()}`);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  getState(sessionId: string): Promise<SessionState> {
    return fetch(this.url(`/sessions/${sessionId}`)).then((r) => asJson<SessionState>(r));
  }

  step(sessionId: string): Promise<{ session_id: string; status: string }> {
    return fetch(this.url(`/sessions/${sessionId}/step`), { method: 'POST' }).then((r) =>
      asJson(r),
    );
  }

  getQuery(sessionId: string): Promise<QueryResponse> {
    return fetch(this.url(`/sessions/${sessionId}/query`)).then((r) => asJson<QueryResponse>(r));
  }

  answer(
    sessionId: string,
    queryId: string,
    answer: { accept: string } | { reject: true },
  ): Promise<{ outcome: string }> {
    return fetch(this.url(`/sessions/${sessionId}/query/${queryId}/answer`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(answer),
    }).then((r) => asJson(r));
  }

  getFactors(sessionId: string): Promise<FactorsResponse> {
    return fetch(this.url(`/sessions/${sessionId}/factors`)).then((r) =>
      asJson<FactorsResponse>(r),
    );
  }

  getMetrics(sessionId: string): Promise<MetricsResponse> {
    return fetch(this.url(`/sessions/${sessionId}/metrics`)).then((r) =>
      asJson<MetricsResponse>(r),
    );
  }
}
