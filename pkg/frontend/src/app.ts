// Review console wiring: queue cards with a/r shortcuts, findings view,
// and the lexicon candidate editor. All vocabulary and rules come from the
// API; this file only renders and forwards.

import * as api from './api.js';
import {
  CardState,
  QueueState,
  applyOptimistic,
  adjustCounts,
  canSubmit,
  emptyQueue,
  loadPage,
  markFailed,
  markSubmitting,
  reconcile,
  replaceCard,
  toggleTag,
  visibleCards,
} from './state.js';
import type { ReviewItem } from './types.js';

let queue: QueueState = emptyQueue();
let tagVocabulary: string[] = [];
let focusedCardId: string | null = null;

const $ = <T extends HTMLElement>(selector: string): T => {
  const el = document.querySelector<T>(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el;
};

function el(tag: string, className = '', text = ''): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function showBanner(message: string, retry?: () => void): void {
  const banner = $('#banner');
  banner.innerHTML = '';
  banner.appendChild(el('span', '', message));
  if (retry) {
    const button = el('button', 'retry', 'Retry');
    button.addEventListener('click', () => {
      banner.classList.add('hidden');
      retry();
    });
    banner.appendChild(button);
  }
  banner.classList.remove('hidden');
}

function hideBanner(): void {
  $('#banner').classList.add('hidden');
}

// -- queue -----------------------------------------------------------------

async function refreshQueue(append = false): Promise<void> {
  try {
    const page = await api.fetchQueue(queue.statusFilter, append ? (queue.cursor ?? 0) : 0);
    queue = loadPage(queue, page, append);
    hideBanner();
    renderQueue();
  } catch (err) {
    showBanner(describe(err), () => void refreshQueue(append));
  }
}

function describe(err: unknown): string {
  if (err instanceof api.RequestFailed) {
    if (err.status === 401) return 'Unauthorized: set your reviewer token.';
    return `Server error (${err.status}).`;
  }
  return 'Network error.';
}

function renderCounts(): void {
  const counts = queue.counts;
  $('#counts').textContent =
    `pending ${counts.pending} / approved ${counts.approved} / rejected ${counts.rejected}`;
}

function renderQueue(): void {
  renderCounts();
  const list = $('#queue');
  list.innerHTML = '';
  const cards = visibleCards(queue);
  if (cards.length === 0) {
    const empty = el('div', 'empty-state');
    empty.appendChild(el('p', '', 'No titles waiting for review.'));
    list.appendChild(empty);
    return;
  }
  for (const card of cards) list.appendChild(renderCard(card));
  const more = el('button', 'load-more', 'Load more') as HTMLButtonElement;
  more.disabled = queue.cursor === null;
  more.addEventListener('click', () => void refreshQueue(true));
  if (queue.cursor !== null) list.appendChild(more);
}

function renderCard(card: CardState): HTMLElement {
  const item = card.item;
  const root = el('article', `card status-${item.status}`);
  root.dataset.id = item.id;
  root.tabIndex = 0;
  root.addEventListener('focusin', () => (focusedCardId = item.id));
  root.addEventListener('click', () => {
    focusedCardId = item.id;
    root.focus();
  });

  const subject = el('h3', 'subject', item.subject);
  root.appendChild(subject);

  const context = el('ul', 'context');
  for (const line of item.context_lines) context.appendChild(el('li', '', line));
  root.appendChild(context);

  if (item.judge_scores) {
    const judge = el('div', 'judge-scores');
    for (const [dim, score] of Object.entries(item.judge_scores)) {
      judge.appendChild(el('span', 'score', `${dim}: ${score}`));
    }
    root.appendChild(judge);
  }

  if (item.status !== 'pending') {
    const outcome = el('div', 'outcome', item.status);
    for (const tag of item.tags) outcome.appendChild(el('span', 'chip', tag));
    root.appendChild(outcome);
    if (card.error) root.appendChild(el('p', 'error', card.error));
    return root;
  }

  const tags = el('div', 'tags');
  for (const tag of tagVocabulary) {
    const chip = el('button', 'chip' + (card.selectedTags.includes(tag) ? ' selected' : ''), tag);
    chip.addEventListener('click', (event) => {
      event.stopPropagation();
      updateCard(toggleTag(card, tag));
    });
    tags.appendChild(chip);
  }
  root.appendChild(tags);

  if (card.selectedTags.includes('SensitiveItem')) {
    const ng = el('input', 'ng-term') as HTMLInputElement;
    ng.placeholder = 'NG substring (for the lexicon)';
    ng.value = card.ngTerm;
    ng.addEventListener('input', () => updateCard({ ...card, ngTerm: ng.value }));
    ng.addEventListener('click', (event) => event.stopPropagation());
    root.appendChild(ng);
  }

  const actions = el('div', 'actions');
  const approve = el('button', 'approve', 'Approve (a)') as HTMLButtonElement;
  const reject = el('button', 'reject', 'Reject (r)') as HTMLButtonElement;
  approve.disabled = reject.disabled = card.submitting;
  approve.addEventListener('click', (event) => {
    event.stopPropagation();
    void decide(item.id, 'approved');
  });
  reject.addEventListener('click', (event) => {
    event.stopPropagation();
    void decide(item.id, 'rejected');
  });
  actions.appendChild(approve);
  actions.appendChild(reject);
  root.appendChild(actions);
  if (card.error) root.appendChild(el('p', 'error', card.error));
  return root;
}

function updateCard(next: CardState): void {
  queue = replaceCard(queue, next);
  renderQueue();
}

async function decide(itemId: string, verdict: 'approved' | 'rejected'): Promise<void> {
  const card = queue.cards.find((c) => c.item.id === itemId);
  if (!card || !canSubmit(card)) return; // debounce: in-flight or decided
  const before = card.item;
  const optimistic = applyOptimistic(markSubmitting(card), verdict);
  queue = { ...queue, counts: adjustCounts(queue.counts, 'pending', verdict) };
  updateCard(optimistic);
  try {
    const serverItem = await api.submitVerdict(itemId, {
      verdict,
      tags: card.selectedTags,
      reviewer: reviewerName(),
      ng_term: card.ngTerm || null,
    });
    updateCard(reconcile(optimistic, serverItem));
  } catch (err) {
    if (err instanceof api.RequestFailed && err.status === 409) {
      // another reviewer got there first; the server state wins
      const detail = err.detail as { item?: ReviewItem };
      if (detail?.item) {
        updateCard(reconcile(optimistic, detail.item));
        return;
      }
    }
    queue = { ...queue, counts: adjustCounts(queue.counts, verdict, 'pending') };
    updateCard(markFailed(optimistic, describe(err), before));
  }
}

function reviewerName(): string {
  return ($('#reviewer') as HTMLInputElement).value.trim() || 'console';
}

// -- keyboard shortcuts ------------------------------------------------------

const SHORTCUT_TARGETS = new Set(['INPUT', 'TEXTAREA', 'SELECT']);

function onKeydown(event: KeyboardEvent): void {
  const target = event.target as HTMLElement | null;
  if (target && SHORTCUT_TARGETS.has(target.tagName)) return;
  if (event.key !== 'a' && event.key !== 'r') return;
  const pending = visibleCards(queue).filter((c) => c.item.status === 'pending');
  if (pending.length === 0) return;
  const card = pending.find((c) => c.item.id === focusedCardId) ?? pending[0];
  event.preventDefault();
  void decide(card.item.id, event.key === 'a' ? 'approved' : 'rejected');
}

// -- findings report ---------------------------------------------------------

async function renderReport(): Promise<void> {
  const panel = $('#report');
  try {
    const report = await api.fetchReport();
    panel.innerHTML = '';
    const rate =
      report.approval_rate === null ? 'n/a' : `${(report.approval_rate * 100).toFixed(1)}%`;
    panel.appendChild(
      el(
        'p',
        'summary',
        `decided ${report.approved + report.rejected} of ${report.total}; approval rate ${rate}`,
      ),
    );
    const table = el('table', 'tag-table');
    const head = el('tr');
    head.appendChild(el('th', '', 'Problem tag'));
    head.appendChild(el('th', '', 'Count'));
    table.appendChild(head);
    for (const [tag, count] of Object.entries(report.tag_counts)) {
      const row = el('tr');
      row.appendChild(el('td', '', tag));
      row.appendChild(el('td', '', String(count)));
      table.appendChild(row);
    }
    panel.appendChild(table);
    const iterations = el('ul', 'iterations');
    for (const [iteration, row] of Object.entries(report.by_iteration)) {
      const rateText = row.approval_rate === null ? 'n/a' : `${(row.approval_rate * 100).toFixed(1)}%`;
      iterations.appendChild(
        el('li', '', `iteration ${iteration}: ${row.total} items, approval ${rateText}`),
      );
    }
    panel.appendChild(iterations);
  } catch (err) {
    showBanner(describe(err), () => void renderReport());
  }
}

// -- lexicon candidates --------------------------------------------------------

async function renderCandidates(): Promise<void> {
  const panel = $('#candidates');
  try {
    const { candidates } = await api.fetchCandidates();
    panel.innerHTML = '';
    if (candidates.length === 0) {
      panel.appendChild(el('p', 'empty-state', 'No lexicon candidates.'));
    }
    for (const candidate of candidates) {
      const row = el('div', `candidate status-${candidate.status}`);
      row.appendChild(el('span', 'pattern', candidate.pattern));
      row.appendChild(el('span', 'reason', candidate.reason));
      row.appendChild(el('span', 'status', candidate.status));
      if (candidate.status === 'candidate') {
        const activate = el('button', 'activate', 'Activate');
        activate.addEventListener('click', () => {
          if (!confirm(`Activate block pattern "${candidate.pattern}"?`)) return;
          void api
            .activateCandidate(candidate.id)
            .then(() => renderCandidates())
            .catch((err) => showRowError(row, err));
        });
        const discard = el('button', 'discard', 'Discard');
        discard.addEventListener('click', () => {
          void api
            .discardCandidate(candidate.id)
            .then(() => renderCandidates())
            .catch((err) => showRowError(row, err));
        });
        row.appendChild(activate);
        row.appendChild(discard);
      }
      panel.appendChild(row);
    }
  } catch (err) {
    showBanner(describe(err), () => void renderCandidates());
  }
}

function showRowError(row: HTMLElement, err: unknown): void {
  const note = el('span', 'error', describe(err));
  row.appendChild(note);
}

function wireCandidateForm(): void {
  const form = $('#candidate-form') as HTMLFormElement;
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const pattern = ($('#candidate-pattern') as HTMLInputElement).value.trim();
    const reason = ($('#candidate-reason') as HTMLInputElement).value.trim();
    if (!pattern) return;
    void api
      .addCandidate(pattern, reason)
      .then(() => {
        form.reset();
        return renderCandidates();
      })
      .catch((err) => showBanner(describe(err)));
  });
  $('#promote').addEventListener('click', () => {
    void api
      .promoteExamples()
      .then((diff) => {
        showBanner(
          `Promotion diff: ${diff.few_shot.length} few-shot pairs, ` +
            `${diff.lexicon_candidates.length} lexicon candidates queued.`,
        );
        return renderCandidates();
      })
      .catch((err) => showBanner(describe(err)));
  });
}

// -- tabs and boot -------------------------------------------------------------

function wireTabs(): void {
  for (const button of document.querySelectorAll<HTMLButtonElement>('nav [data-tab]')) {
    button.addEventListener('click', () => {
      for (const other of document.querySelectorAll('nav [data-tab]')) {
        other.classList.toggle('active', other === button);
      }
      for (const panel of document.querySelectorAll<HTMLElement>('.tab-panel')) {
        panel.classList.toggle('hidden', panel.id !== button.dataset.tab);
      }
      if (button.dataset.tab === 'report-tab') void renderReport();
      if (button.dataset.tab === 'lexicon-tab') void renderCandidates();
    });
  }
}

function wireAuth(): void {
  const input = $('#token') as HTMLInputElement;
  input.value = api.getToken() ?? '';
  input.addEventListener('change', () => {
    api.setToken(input.value.trim() || null);
    void refreshQueue();
  });
}

export async function boot(): Promise<void> {
  wireTabs();
  wireAuth();
  wireCandidateForm();
  document.addEventListener('keydown', onKeydown);
  $('#refresh').addEventListener('click', () => void refreshQueue());
  try {
    tagVocabulary = (await api.fetchTags()).tags;
  } catch (err) {
    showBanner(describe(err), () => void boot());
    return;
  }
  await refreshQueue();
}

if (typeof document !== 'undefined' && document.readyState !== 'loading') {
  void boot();
} else if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', () => void boot());
}
