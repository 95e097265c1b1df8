// Wire types for the labeling service (api_version 1). Field names follow
// the JSON payloads exactly; the UI never invents state the server cannot
// reproduce on reload.

export type SessionStatus =
  | "QUERY_PENDING"
  | "READY"
  | "BUSY"
  | "DONE"
  | "ERROR";

export type Label = 0 | 1;

export interface SessionInfo {
  api_version: number;
  session_id: string;
  status: SessionStatus;
  stage: number;
  stages_total: number;
  budget: number;
  labels_received: number;
  ready_to_advance: boolean;
  n: number;
  d: number;
  dataset: string;
  objective: string;
  strategy: string;
  ssl: string;
  seed: number;
  error: string | null;
}

export interface QueryCard {
  index: number;
  score: number;
  boundary_distance: number | null;
  features: Record<string, number>;
  projection: [number, number];
  label?: Label;
}

export interface BackgroundPoint {
  index: number;
  projection: [number, number];
  score: number;
  label: Label | null;
  queried: boolean;
}

export interface QueryPayload {
  status: SessionStatus;
  stage: number;
  q: number | null;
  threshold: number | null;
  ready_to_advance: boolean;
  pending: QueryCard[];
  completed: QueryCard[];
  background: BackgroundPoint[];
}

export interface LossSummary {
  first: number;
  last: number;
  min: number;
}

export interface MetricsPayload {
  api_version: number;
  session_id: string;
  status: SessionStatus;
  stage: number;
  stages_total: number;
  budget: number;
  auc: (number | null)[];
  r: number[];
  q: number[];
  q_next: number[];
  n_labeled_normal: number[];
  n_labeled_abnormal: number[];
  loss: (LossSummary | null)[];
  pretrain_loss: number[];
}

export interface LabelAck {
  recorded: boolean;
  index: number;
  label: Label;
  labels_received: number;
  ready_to_advance: boolean;
}

export interface SessionCreated extends SessionInfo {
  query: QueryPayload;
}
