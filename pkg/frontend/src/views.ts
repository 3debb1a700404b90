// Pure render functions: API payloads in, HTML strings out. Keeping these
// free of fetch/DOM state makes the dashboard reproducible from API reads
// alone and lets tests assert on markup directly.

import type {
  FactorTemplate,
  MetricRow,
  ReviewQuery,
  SessionState,
  SupportingInstance,
} from './api.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/** Wrap every whitespace-delimited occurrence of `token` in <mark>. */
export function highlightToken(text: string, token: string): string {
  const target = token.toLowerCase();
  return text
    .split(/(\s+)/)
    .map((part) => {
      if (part.trim().toLowerCase() === target) {
        return `<mark>${escapeHtml(part)}</mark>`;
      }
      return escapeHtml(part);
    })
    .join('');
}

export function posteriorBar(posterior: number[], labels: string[]): string {
  const cells = posterior
    .map((p, i) => {
      const pct = (100 * p).toFixed(1);
      const label = labels[i] ?? `label ${i}`;
      return `<span class="bar-cell" style="width:${pct}%" title="${escapeHtml(label)}: ${pct}%"></span>`;
    })
    .join('');
  const text = posterior.map((p) => p.toFixed(2)).join(' / ');
  return `<span class="bar">${cells}</span><span class="bar-text">${text}</span>`;
}

function supportingRow(inst: SupportingInstance, token: string, labels: string[]): string {
  return `<li class="supporting" data-instance="${escapeHtml(inst.instance_id)}">
    <span class="snippet">${highlightToken(inst.text, token)}</span>
    ${posteriorBar(inst.posterior, labels)}
  </li>`;
}

export function renderQuery(query: ReviewQuery | null, labels: string[]): string {
  if (query === null) {
    return `<div class="idle">No query waiting for review.
      <span class="spinner" title="run in progress"></span></div>`;
  }
  const answered = query.outcome !== 'pending';
  const disabled = answered ? 'disabled' : '';
  const buttons = Object.keys(query.candidates)
    .map(
      (label) => `<button class="accept" data-query="${escapeHtml(query.query_id)}"
        data-label="${escapeHtml(label)}" ${disabled}>accept: ${escapeHtml(
          query.candidates[label],
        )}</button>`,
    )
    .join('\n');
  const outcome = answered
    ? `<p class="outcome">answered: ${query.outcome}${
        query.accepted_label ? ` (${escapeHtml(query.accepted_label)})` : ''
      }</p>`
    : '';
  return `<div class="query" data-query-id="${escapeHtml(query.query_id)}">
    <h3>Review feature '<code>${escapeHtml(query.token)}</code>'</h3>
    <p>average-posterior entropy ${query.entropy.toFixed(4)} nats;
       average posterior ${query.avg_posterior.map((p) => p.toFixed(3)).join(' / ')}</p>
    <ul class="supporting-list">
      ${query.supporting.map((s) => supportingRow(s, query.token, labels)).join('\n')}
    </ul>
    ${buttons}
    <button class="reject" data-query="${escapeHtml(query.query_id)}" ${disabled}>reject all</button>
    ${outcome}
  </div>`;
}

// origin colors follow the convention: seed rules blue, self-trained red,
// reviewer-accepted black
export function renderFactors(templates: FactorTemplate[]): string {
  const rows = templates
    .map(
      (t) => `<tr class="origin-${t.origin}" data-key="${escapeHtml(t.key)}">
      <td>${escapeHtml(t.describe)}</td>
      <td>${escapeHtml(t.kind)}</td>
      <td class="origin">${t.origin}</td>
      <td class="weight">${t.weight.toFixed(3)}</td>
    </tr>`,
    )
    .join('\n');
  return `<table class="factors">
    <thead><tr><th>rule</th><th>kind</th><th>origin</th><th>weight</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

function polyline(points: Array<[number, number]>, cls: string): string {
  if (points.length === 0) return '';
  const path = points.map(([x, y]) => `${x.toFixed(1)},${y.toFixed(1)}`).join(' ');
  return `<polyline class="${cls}" fill="none" points="${path}" />`;
}

/** Accuracy and posterior-entropy curves over the run, as inline SVG. */
export function renderMetricsChart(rows: MetricRow[], width = 360, height = 120): string {
  if (rows.length === 0) {
    return '<div class="chart empty">no metrics yet</div>';
  }
  const xs = rows.map((_, i) => (rows.length === 1 ? 0 : (i / (rows.length - 1)) * (width - 20)) + 10);
  const accPts: Array<[number, number]> = [];
  rows.forEach((r, i) => {
    if (r.test_accuracy !== null) {
      accPts.push([xs[i], height - 10 - r.test_accuracy * (height - 20)]);
    }
  });
  const maxEnt = Math.max(...rows.map((r) => r.q_entropy), 1e-9);
  const entPts: Array<[number, number]> = rows.map((r, i) => [
    xs[i],
    height - 10 - (r.q_entropy / maxEnt) * (height - 20),
  ]);
  const last = rows[rows.length - 1];
  const lastAcc = last.test_accuracy === null ? 'n/a' : last.test_accuracy.toFixed(3);
  return `<div class="chart">
    <svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">
      ${polyline(accPts, 'accuracy-line')}
      ${polyline(entPts, 'entropy-line')}
    </svg>
    <div class="chart-legend">accuracy ${lastAcc} | posterior entropy ${last.q_entropy.toFixed(3)}</div>
  </div>`;
}

export function renderBudget(state: SessionState): string {
  const used = state.budget === 0 ? 0 : state.answered / state.budget;
  return `<div class="budget">
    <span class="gauge"><span class="gauge-fill" style="width:${(100 * used).toFixed(0)}%"></span></span>
    <span class="budget-text">${state.answered} / ${state.budget} queries answered</span>
  </div>`;
}

export function renderStatus(state: SessionState): string {
  const err = state.error ? `<span class="error">${escapeHtml(state.error)}</span>` : '';
  return `<div class="status status-${state.status}">
    session <code>${escapeHtml(state.id)}</code> | ${state.status}
    | outer iteration ${state.outer_iteration} | ${state.n_templates} rules ${err}
  </div>`;
}

export function renderWarning(message: string | null): string {
  if (!message) return '';
  return `<div class="warning">${escapeHtml(message)}</div>`;
}
