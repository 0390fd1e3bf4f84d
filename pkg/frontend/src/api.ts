// Thin fetch wrapper for the review service. The bearer token lives in
// sessionStorage only (never persisted), and every non-2xx response is
// surfaced as a typed ApiError so the UI can react (409 -> reconcile).

import type {
  ApiError,
  FindingsReport,
  LexiconCandidate,
  QueueResponse,
  ReviewItem,
  VerdictRequest,
} from './types.js';

const TOKEN_KEY = 'subjectforge.review.token';

export function setToken(token: string | null): void {
  if (token) {
    sessionStorage.setItem(TOKEN_KEY, token);
  } else {
    sessionStorage.removeItem(TOKEN_KEY);
  }
}

export function getToken(): string | null {
  return sessionStorage.getItem(TOKEN_KEY);
}

export class RequestFailed extends Error implements ApiError {
  status: number;
  detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`request failed with ${status}`);
    this.status = status;
    this.detail = detail;
  }
}

async function request<T>(path: string, init: RequestInit = {}): Promise<T> {
  const headers: Record<string, string> = { 'Content-Type': 'application/json' };
  const token = typeof sessionStorage !== 'undefined' ? getToken() : null;
  if (token) headers['Authorization'] = `Bearer ${token}`;
  const response = await fetch(path, { ...init, headers: { ...headers, ...init.headers } });
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    body = null;
  }
  if (!response.ok) {
    throw new RequestFailed(response.status, (body as { detail?: unknown })?.detail ?? body);
  }
  return body as T;
}

export function fetchQueue(
  status: string = 'pending',
  cursor: number = 0,
  limit: number = 20,
): Promise<QueueResponse> {
  const params = new URLSearchParams({ status, cursor: String(cursor), limit: String(limit) });
  return request<QueueResponse>(`/api/review/queue?${params}`);
}

export function fetchTags(): Promise<{ tags: string[] }> {
  return request<{ tags: string[] }>('/api/review/tags');
}

export function submitVerdict(itemId: string, body: VerdictRequest): Promise<ReviewItem> {
  return request<ReviewItem>(`/api/review/${encodeURIComponent(itemId)}/verdict`, {
    method: 'POST',
    body: JSON.stringify(body),
  });
}

export function fetchReport(): Promise<FindingsReport> {
  return request<FindingsReport>('/api/review/report');
}

export function fetchCandidates(): Promise<{ candidates: LexiconCandidate[] }> {
  return request<{ candidates: LexiconCandidate[] }>('/api/lexicon/candidates');
}

export function addCandidate(pattern: string, reason: string): Promise<LexiconCandidate> {
  return request<LexiconCandidate>('/api/lexicon/candidates', {
    method: 'POST',
    body: JSON.stringify({ pattern, reason }),
  });
}

export function activateCandidate(id: string): Promise<LexiconCandidate> {
  return request<LexiconCandidate>(`/api/lexicon/candidates/${encodeURIComponent(id)}/activate`, {
    method: 'POST',
  });
}

export function discardCandidate(id: string): Promise<LexiconCandidate> {
  return request<LexiconCandidate>(`/api/lexicon/candidates/${encodeURIComponent(id)}/discard`, {
    method: 'POST',
  });
}

export function promoteExamples(): Promise<{
  few_shot: unknown[];
  lexicon_candidates: { pattern: string }[];
}> {
  return request('/api/examples/promote', { method: 'POST' });
}
