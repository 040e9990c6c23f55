import { z } from "zod";

// Star ids arrive as strings: 64-bit ids overflow JSON's float53 range.

export const AlertSchema = z.object({
  kind: z.enum(["new_star", "transient"]),
  star_id: z.string(),
  camera: z.number().int(),
  seq: z.number().int(),
  ra_deg: z.number(),
  dec_deg: z.number(),
  wall_time: z.number(),
  score: z.number().optional(),
  model: z.string().optional(),
  dropped: z.number().int().optional(),
});
export type Alert = z.infer<typeof AlertSchema>;

export const ResultMetaSchema = z.object({
  engines: z.array(z.string()),
  elapsed_ms: z.number(),
  approximate: z.boolean(),
  est_precision: z.number().nullable(),
});

export const ResultSetSchema = z.object({
  columns: z.array(z.string()),
  rows: z.array(z.array(z.union([z.string(), z.number(), z.null()]))),
  meta: ResultMetaSchema,
});
export type ResultSet = z.infer<typeof ResultSetSchema>;

export const QueryErrorSchema = z.object({
  error: z.string(),
  position: z.number().int().optional(),
  expected: z.array(z.string()).optional(),
});
export type QueryError = z.infer<typeof QueryErrorSchema>;

/** Decode unknown JSON into an Alert; null means the payload is malformed. */
export function decodeAlert(raw: unknown): Alert | null {
  const parsed = AlertSchema.safeParse(raw);
  return parsed.success ? parsed.data : null;
}
