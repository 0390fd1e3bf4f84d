import { describe, expect, it } from 'vitest';

import {
  adjustCounts,
  applyOptimistic,
  canSubmit,
  emptyQueue,
  loadPage,
  markFailed,
  markSubmitting,
  newCard,
  reconcile,
  replaceCard,
  toggleTag,
  visibleCards,
} from '../src/state.js';
import type { QueueResponse, ReviewItem } from '../src/types.js';

function item(id: string, status: ReviewItem['status'] = 'pending'): ReviewItem {
  return {
    id,
    subject: `件名 ${id}`,
    context_lines: [`商品例：item-${id}`],
    status,
    tags: [],
    reviewer: '',
    decided_at: null,
    iteration: 1,
    judge_scores: null,
    ng_term: null,
  };
}

function page(ids: string[], cursor: number | null = null): QueueResponse {
  return {
    items: ids.map((id) => item(id)),
    cursor,
    counts: { pending: ids.length, approved: 0, rejected: 0 },
  };
}

describe('loadPage', () => {
  it('replaces cards on refresh', () => {
    let state = loadPage(emptyQueue(), page(['a', 'b']), false);
    state = loadPage(state, page(['c']), false);
    expect(state.cards.map((c) => c.item.id)).toEqual(['c']);
  });

  it('appends without duplicating known ids', () => {
    let state = loadPage(emptyQueue(), page(['a', 'b'], 2), false);
    state = loadPage(state, page(['b', 'c'], null), true);
    expect(state.cards.map((c) => c.item.id)).toEqual(['a', 'b', 'c']);
    expect(state.cursor).toBeNull();
  });
});

describe('tag selection', () => {
  it('toggles on and off', () => {
    let card = newCard(item('a'));
    card = toggleTag(card, 'UnnaturalLanguage');
    expect(card.selectedTags).toEqual(['UnnaturalLanguage']);
    card = toggleTag(card, 'UnnaturalLanguage');
    expect(card.selectedTags).toEqual([]);
  });
});

describe('verdict flow', () => {
  it('debounces double submission', () => {
    const card = newCard(item('a'));
    expect(canSubmit(card)).toBe(true);
    const inFlight = markSubmitting(card);
    expect(canSubmit(inFlight)).toBe(false);
    const decided = reconcile(inFlight, item('a', 'approved'));
    expect(canSubmit(decided)).toBe(false);
  });

  it('applies optimistic verdict with selected tags', () => {
    let card = toggleTag(newCard(item('a')), 'ExcessiveLength');
    card = applyOptimistic(markSubmitting(card), 'rejected');
    expect(card.item.status).toBe('rejected');
    expect(card.item.tags).toEqual(['ExcessiveLength']);
    expect(card.decidedLocally).toBe(true);
  });

  it('reconciles with the server item after a conflict', () => {
    const optimistic = applyOptimistic(markSubmitting(newCard(item('a'))), 'approved');
    const serverSays = { ...item('a', 'rejected'), tags: ['SensitiveItem'], reviewer: 'other' };
    const settled = reconcile(optimistic, serverSays);
    expect(settled.item.status).toBe('rejected');
    expect(settled.item.reviewer).toBe('other');
    expect(settled.submitting).toBe(false);
  });

  it('reverts on transport failure and keeps the error', () => {
    const before = item('a');
    const optimistic = applyOptimistic(markSubmitting(newCard(before)), 'approved');
    const failed = markFailed(optimistic, 'Network error.', before);
    expect(failed.item.status).toBe('pending');
    expect(failed.error).toBe('Network error.');
    expect(canSubmit(failed)).toBe(true);
  });
});

describe('counts and visibility', () => {
  it('moves one unit between statuses', () => {
    const counts = adjustCounts({ pending: 3, approved: 1, rejected: 0 }, 'pending', 'approved');
    expect(counts).toEqual({ pending: 2, approved: 2, rejected: 0 });
  });

  it('keeps locally decided cards visible in the pending view', () => {
    let state = loadPage(emptyQueue('pending'), page(['a', 'b']), false);
    const decided = reconcile(state.cards[0], item('a', 'approved'));
    state = replaceCard(state, decided);
    expect(visibleCards(state).map((c) => c.item.id)).toEqual(['a', 'b']);
  });

  it('hides foreign decided cards in the pending view', () => {
    const state = loadPage(emptyQueue('pending'), page(['a']), false);
    const foreign = { ...newCard(item('b', 'rejected')), decidedLocally: false };
    const merged = { ...state, cards: [...state.cards, foreign] };
    expect(visibleCards(merged).map((c) => c.item.id)).toEqual(['a']);
  });
});
