// Dashboard wiring: poll the session API once per second while a run is in
// flight, render into the page, and forward accept/reject clicks. A failed
// submit is queued and retried on the next tick with a visible warning.

import { ApiClient, ConflictError } from './api.js';
import {
  renderBudget,
  renderFactors,
  renderMetricsChart,
  renderQuery,
  renderStatus,
  renderWarning,
} from './views.js';

const POLL_MS = 1000;

type PendingAnswer = {
  queryId: string;
  body: { accept: string } | { reject: true };
};

export class Dashboard {
  private warning: string | null = null;
  private pendingAnswer: PendingAnswer | null = null;
  private labels: string[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private root: Document | HTMLElement = document,
  ) {}

  start(): void {
    void this.api.step(this.sessionId).catch(() => undefined);
    this.wireClicks();
    void this.tick();
    this.timer = setInterval(() => void this.tick(), POLL_MS);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
  }

  private region(name: string): HTMLElement | null {
    return (this.root as HTMLElement | Document).querySelector(`#${name}`);
  }

  private set(name: string, html: string): void {
    const el = this.region(name);
    if (el) el.innerHTML = html;
  }

  private wireClicks(): void {
    const host = this.region('query');
    if (!host) return;
    host.addEventListener('click', (ev) => {
      const target = ev.target as HTMLElement;
      const queryId = target.getAttribute('data-query');
      if (!queryId) return;
      if (target.classList.contains('accept')) {
        const label = target.getAttribute('data-label');
        if (label) void this.submit(queryId, { accept: label });
      } else if (target.classList.contains('reject')) {
        void this.submit(queryId, { reject: true });
      }
    });
  }

  async submit(queryId: string, body: PendingAnswer['body']): Promise<void> {
    try {
      await this.api.answer(this.sessionId, queryId, body);
      this.warning = null;
      this.pendingAnswer = null;
      await this.tick();
    } catch (err) {
      if (err instanceof ConflictError) {
        // answered elsewhere; refresh shows the idle state
        this.warning = `query ${queryId} was already answered`;
        this.pendingAnswer = null;
        await this.tick();
      } else {
        this.warning = 'submit failed; queued for retry';
        this.pendingAnswer = { queryId, body };
      }
    }
  }

  async tick(): Promise<void> {
    if (this.pendingAnswer) {
      const retry = this.pendingAnswer;
      this.pendingAnswer = null;
      await this.submit(retry.queryId, retry.body);
      return;
    }
    try {
      const [state, query, factors, metrics] = await Promise.all([
        this.api.getState(this.sessionId),
        this.api.getQuery(this.sessionId),
        this.api.getFactors(this.sessionId),
        this.api.getMetrics(this.sessionId),
      ]);
      if (this.labels.length === 0 && query.query) {
        this.labels = Object.keys(query.query.candidates);
      }
      this.set('status', renderStatus(state));
      this.set('budget', renderBudget(state));
      this.set('query', renderQuery(query.query, this.labels));
      this.set('factors', renderFactors(factors.templates));
      this.set('metrics', renderMetricsChart(metrics.metrics));
      this.set('warning', renderWarning(this.warning));
      if (state.status === 'done' || state.status === 'failed') this.stop();
    } catch {
      this.warning = 'cannot reach the service; retrying';
      this.set('warning', renderWarning(this.warning));
    }
  }
}

declare global {
  interface Window {
    weaksupDashboard?: Dashboard;
  }
}

if (typeof document !== 'undefined' && document.getElementById('status')) {
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get('session');
  if (sessionId) {
    const dash = new Dashboard(new ApiClient(''), sessionId);
    window.weaksupDashboard = dash;
    dash.start();
  } else {
    const el = document.getElementById('status');
    if (el) el.textContent = 'add ?session=<id> to the URL to open a session';
  }
}
