// Shared types mirroring the campaign service's wire formats.

export type Phase =
  | 'ALIGNING'
  | 'ARMED'
  | 'FIRING'
  | 'SCANNING'
  | 'VERIFYING'
  | 'CLEARED';

export type CommandType =
  | 'set_power'
  | 'align'
  | 'fire_burst'
  | 'scan_height'
  | 'verify_transport'
  | 'compensation_survey'
  | 'capture_snapshot';

export interface Command {
  type: CommandType;
  [key: string]: unknown;
}

export interface CampaignState {
  phase: Phase | null;
  power_percent?: number;
  align_dx?: number;
  align_dz?: number;
  defect_cleared?: boolean;
  scattering_cross_section_m2?: number;
  clock_s?: number;
  seq: number;
  seed?: number;
  scenario_hash?: string | null;
}

export interface ScenarioSummary {
  chip_bbox: [number[], number[]];
  defect_center: number[];
  defect_footprint: number[];
  defect_height: number;
  transport_span: number[];
  power_range: number[];
}

export interface StateResponse {
  seq: number;
  state: CampaignState;
  scenario: ScenarioSummary | null;
}

export interface CommandResponse {
  accepted: boolean;
  seq: number;
  reason: string | null;
}

export interface CampaignEvent {
  seq: number;
  t: number;
  kind: string;
  payload: Record<string, unknown>;
  state_hash: string;
}
