/**
 * Domain types for the review queue, mirrored from the review-core
 * HTTP API. Verdict payloads are validated against the same rules the
 * server enforces, so a payload that fails here would also be refused
 * server-side (422).
 */

import { z } from "zod";

export const REVIEW_STATES = ["Pending", "Approved", "Rejected", "Edited"] as const;
export const KNOWLEDGE_KINDS = ["Species", "Disease"] as const;
export const VERDICT_ACTIONS = ["Approve", "Reject", "Edit"] as const;

export type ReviewState = (typeof REVIEW_STATES)[number];
export type KnowledgeKind = (typeof KNOWLEDGE_KINDS)[number];
export type VerdictAction = (typeof VERDICT_ACTIONS)[number];

const historyEventSchema = z
  .object({
    action: z.string(),
    reviewer_id: z.string(),
    timestamp: z.string(),
    note: z.string().optional(),
  })
  .passthrough();

/** Queue entry as served by GET /api/queue and /api/entries/{id}. */
export const knowledgeEntrySchema = z.object({
  entry_id: z.string().min(1),
  class_label: z.string().min(1),
  kind: z.enum(KNOWLEDGE_KINDS),
  description: z.string(),
  source_citations: z.array(z.string()),
  state: z.enum(REVIEW_STATES),
  reviewer_note: z.string().nullable(),
  edited_text: z.string().nullable(),
  history: z.array(historyEventSchema),
  retrieval_round: z.number().int().nonnegative(),
});

export type KnowledgeEntry = z.infer<typeof knowledgeEntrySchema>;

export const queueSchema = z.array(knowledgeEntrySchema);

export const statsSchema = z
  .object({
    pending: z.number().int().nonnegative(),
    approved: z.number().int().nonnegative(),
    rejected: z.number().int().nonnegative(),
    edited: z.number().int().nonnegative(),
    total: z.number().int().nonnegative(),
  })
  .refine(
    (s) => s.pending + s.approved + s.rejected + s.edited === s.total,
    { message: "state counts must sum to total" },
  );

export type QueueStats = z.infer<typeof statsSchema>;

const blank = (value: string | undefined | null) =>
  value === undefined || value === null || value.trim() === "";

/**
 * POST /api/entries/{id}/verdict body. Server invariants mirrored:
 * Reject requires a non-blank note, Edit requires non-blank
 * edited_text, reviewer_id is always required.
 */
export const verdictPayloadSchema = z
  .object({
    action: z.enum(VERDICT_ACTIONS),
    reviewer_id: z.string(),
    note: z.string().optional(),
    edited_text: z.string().optional(),
  })
  .superRefine((payload, ctx) => {
    if (blank(payload.reviewer_id)) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        path: ["reviewer_id"],
        message: "reviewer_id is required",
      });
    }
    if (payload.action === "Reject" && blank(payload.note)) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        path: ["note"],
        message: "Reject requires a non-empty note",
      });
    }
    if (payload.action === "Edit" && blank(payload.edited_text)) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        path: ["edited_text"],
        message: "Edit requires non-empty edited_text",
      });
    }
  });

export type VerdictPayload = z.infer<typeof verdictPayloadSchema>;

export const apiErrorBodySchema = z.object({
  error: z.string(),
  code: z.string(),
});

/** Text a card displays: the reviewer's edit wins over the original. */
export function displayText(entry: KnowledgeEntry): string {
  return entry.edited_text ?? entry.description;
}
