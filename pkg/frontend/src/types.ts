// Payload shapes of the review-service REST API. The server is the single
// source of truth for vocabulary and state; nothing here re-encodes rules.

export type ReviewStatus = 'pending' | 'approved' | 'rejected';

export interface ReviewItem {
  id: string;
  subject: string;
  context_lines: string[];
  status: ReviewStatus;
  tags: string[];
  reviewer: string;
  decided_at: string | null;
  iteration: number;
  judge_scores: Record<string, number> | null;
  ng_term: string | null;
}

export interface QueueResponse {
  items: ReviewItem[];
  cursor: number | null;
  counts: Record<ReviewStatus, number>;
}

export interface VerdictRequest {
  verdict: 'approved' | 'rejected';
  tags: string[];
  reviewer: string;
  ng_term?: string | null;
}

export interface FindingsReport {
  total: number;
  pending: number;
  approved: number;
  rejected: number;
  approval_rate: number | null;
  tag_counts: Record<string, number>;
  by_iteration: Record<
    string,
    { total: number; approved: number; rejected: number; approval_rate: number | null }
  >;
}

export type CandidateStatus = 'candidate' | 'active' | 'discarded';

export interface LexiconCandidate {
  id: string;
  pattern: string;
  reason: string;
  status: CandidateStatus;
  source_item_id: string | null;
}

export interface ApiError {
  status: number;
  detail: unknown;
}
