// Pure client-side state transitions for the review queue. Only UI
// bookkeeping lives here: verdicts are applied optimistically and always
// reconciled with whatever the server answers (including 409 conflicts,
// where the server's decision wins).

import type { QueueResponse, ReviewItem, ReviewStatus } from './types.js';

export interface CardState {
  item: ReviewItem;
  selectedTags: string[];
  ngTerm: string;
  submitting: boolean;
  decidedLocally: boolean;
  error: string | null;
}

export interface QueueState {
  cards: CardState[];
  cursor: number | null;
  counts: Record<ReviewStatus, number>;
  statusFilter: string;
}

export function emptyQueue(statusFilter: string = 'pending'): QueueState {
  return {
    cards: [],
    cursor: null,
    counts: { pending: 0, approved: 0, rejected: 0 },
    statusFilter,
  };
}

export function newCard(item: ReviewItem): CardState {
  return { item, selectedTags: [], ngTerm: '', submitting: false, decidedLocally: false, error: null };
}

export function loadPage(state: QueueState, page: QueueResponse, append: boolean): QueueState {
  const fresh = page.items.map(newCard);
  const known = new Set(state.cards.map((c) => c.item.id));
  return {
    ...state,
    cards: append ? [...state.cards, ...fresh.filter((c) => !known.has(c.item.id))] : fresh,
    cursor: page.cursor,
    counts: page.counts,
  };
}

export function toggleTag(card: CardState, tag: string): CardState {
  const selected = card.selectedTags.includes(tag)
    ? card.selectedTags.filter((t) => t !== tag)
    : [...card.selectedTags, tag];
  return { ...card, selectedTags: selected };
}

/** A verdict fires at most once per card; re-entry while in flight is a no-op. */
export function canSubmit(card: CardState): boolean {
  return !card.submitting && card.item.status === 'pending';
}

export function markSubmitting(card: CardState): CardState {
  return { ...card, submitting: true, error: null };
}

/** Optimistic local decision, shown until the server answer replaces it. */
export function applyOptimistic(card: CardState, verdict: 'approved' | 'rejected'): CardState {
  return {
    ...card,
    decidedLocally: true,
    item: { ...card.item, status: verdict, tags: card.selectedTags },
  };
}

/** Server answer (success or the item embedded in a 409) is authoritative. */
export function reconcile(card: CardState, serverItem: ReviewItem): CardState {
  return {
    ...card,
    item: serverItem,
    submitting: false,
    decidedLocally: serverItem.status !== 'pending',
    error: null,
  };
}

export function markFailed(card: CardState, message: string, revertTo: ReviewItem): CardState {
  return { ...card, item: revertTo, submitting: false, decidedLocally: false, error: message };
}

export function replaceCard(state: QueueState, next: CardState): QueueState {
  return {
    ...state,
    cards: state.cards.map((c) => (c.item.id === next.item.id ? next : c)),
  };
}

export function adjustCounts(
  counts: Record<ReviewStatus, number>,
  from: ReviewStatus,
  to: ReviewStatus,
): Record<ReviewStatus, number> {
  if (from === to) return counts;
  return { ...counts, [from]: Math.max(0, counts[from] - 1), [to]: counts[to] + 1 };
}

/** Cards decided in this session stay visible (with their outcome chip)
 * even in a pending-only view; others must match the filter. */
export function visibleCards(state: QueueState): CardState[] {
  if (state.statusFilter === 'all') return state.cards;
  return state.cards.filter(
    (c) => c.item.status === state.statusFilter || c.submitting || c.decidedLocally,
  );
}
