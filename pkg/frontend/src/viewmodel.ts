// Console view model: the single source of what the UI renders.
//
// Rules it enforces (the server stays authoritative regardless):
//   - render only server-confirmed state, stamped with its seq;
//   - one command in flight at a time, no optimistic updates;
//   - controls offered only for commands the displayed phase allows;
//   - a stale flag whenever the feed lags the server or is reconnecting.

import { ApiClient } from './api.js';
import { EventFeed, type FeedStatus, type FetchLike } from './feed.js';
import { isCommandAllowed } from './gating.js';
import type {
  CampaignEvent,
  Command,
  CommandResponse,
  CommandType,
  Phase,
  ScenarioSummary,
  StateResponse,
} from './types.js';

export interface ConsoleSnapshot {
  seq: number;
  phase: Phase | null;
  powerPercent: number;
  scatteringOn: boolean;
  defectCleared: boolean;
  clockS: number;
  alignDx: number;
  alignDz: number;
  stale: boolean;
  feedStatus: FeedStatus;
  commandInFlight: boolean;
  enabled: Record<CommandType, boolean>;
  events: CampaignEvent[];
  scenario: ScenarioSummary | null;
  lastRejection: string | null;
}

const COMMAND_TYPES: CommandType[] = [
  'set_power',
  'align',
  'fire_burst',
  'scan_height',
  'verify_transport',
  'compensation_survey',
  'capture_snapshot',
];

export class ConsoleViewModel {
  readonly api: ApiClient;
  readonly feed: EventFeed;

  private state: StateResponse | null = null;
  private events: CampaignEvent[] = [];
  private feedStatus: FeedStatus = 'stopped';
  private inFlight = false;
  private lastRejection: string | null = null;
  private listeners: Array<(snap: ConsoleSnapshot) => void> = [];
  private refreshChain: Promise<void> = Promise.resolve();

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.api = new ApiClient(baseUrl, fetchImpl);
    this.feed = new EventFeed({
      baseUrl,
      fetchImpl,
      onEvent: (e) => this.onEvent(e),
      onStatus: (s) => {
        this.feedStatus = s;
        this.notify();
      },
    });
  }

  // -- lifecycle ------------------------------------------------------------

  /** Fetch the current state and subscribe to events from that seq. */
  async connect(): Promise<void> {
    this.state = await this.api.getState();
    this.feed.start(this.state.seq);
    this.notify();
  }

  async disconnect(): Promise<void> {
    await this.feed.stop();
  }

  onChange(listener: (snap: ConsoleSnapshot) => void): void {
    this.listeners.push(listener);
  }

  // -- event handling -------------------------------------------------------

  private onEvent(event: CampaignEvent): void {
    this.events.push(event);
    // render only server-confirmed state: refresh it for every new seq,
    // serialized so responses cannot arrive out of order
    this.refreshChain = this.refreshChain.then(() => this.refreshState());
    this.notify();
  }

  private async refreshState(): Promise<void> {
    try {
      const fresh = await this.api.getState();
      if (!this.state || fresh.seq >= this.state.seq) {
        this.state = fresh;
      }
      this.notify();
    } catch {
      // disconnected; the feed's reconnect path will resynchronize
    }
  }

  /** Wait until the rendered state has caught up with the feed. */
  async settled(): Promise<void> {
    await this.refreshChain;
  }

  /** Wait until the feed has delivered `seq` and the render caught up. */
  async waitForSeq(seq: number, timeoutMs = 10_000): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (this.feed.lastSeq < seq) {
      if (Date.now() > deadline) {
        throw new Error(`timed out waiting for seq ${seq} (at ${this.feed.lastSeq})`);
      }
      await new Promise((r) => setTimeout(r, 25));
    }
    await this.settled();
  }

  // -- commands -------------------------------------------------------------

  canIssue(type: CommandType): boolean {
    if (this.inFlight || this.state === null) return false;
    return isCommandAllowed(this.state.state.phase, type);
  }

  async issue(command: Command): Promise<CommandResponse> {
    if (this.inFlight) throw new Error('a command is already in flight');
    if (!this.canIssue(command.type)) {
      throw new Error(`${command.type} not allowed in phase ${this.state?.state.phase}`);
    }
    this.inFlight = true;
    this.notify();
    try {
      const res = await this.api.postCommand(command);
      this.lastRejection = res.accepted ? null : res.reason;
      return res;
    } finally {
      this.inFlight = false;
      this.notify();
    }
  }

  // convenience wrappers for the concrete controls
  setPower(percent: number): Promise<CommandResponse> {
    return this.issue({ type: 'set_power', percent });
  }

  align(dx: number, dz: number): Promise<CommandResponse> {
    return this.issue({ type: 'align', dx, dz });
  }

  fireBurst(count: number): Promise<CommandResponse> {
    return this.issue({ type: 'fire_burst', count });
  }

  scanHeight(zMin: number, zMax: number, samples: number): Promise<CommandResponse> {
    return this.issue({ type: 'scan_height', z_min: zMin, z_max: zMax, samples });
  }

  verifyTransport(nTrials: number): Promise<CommandResponse> {
    return this.issue({ type: 'verify_transport', n_trials: nTrials });
  }

  compensationSurvey(): Promise<CommandResponse> {
    return this.issue({ type: 'compensation_survey' });
  }

  // -- rendered state -------------------------------------------------------

  snapshot(): ConsoleSnapshot {
    const st = this.state?.state;
    const phase = st?.phase ?? null;
    const stale =
      this.state === null ||
      this.feedStatus === 'reconnecting' ||
      this.feedStatus === 'connecting' ||
      this.feed.lastSeq > this.state.seq;
    const enabled = Object.fromEntries(
      COMMAND_TYPES.map((t) => [t, !this.inFlight && !stale && isCommandAllowed(phase, t)]),
    ) as Record<CommandType, boolean>;
    return {
      seq: this.state?.seq ?? 0,
      phase,
      powerPercent: st?.power_percent ?? 0,
      scatteringOn: (st?.scattering_cross_section_m2 ?? 0) > 0,
      defectCleared: st?.defect_cleared ?? false,
      clockS: st?.clock_s ?? 0,
      alignDx: st?.align_dx ?? 0,
      alignDz: st?.align_dz ?? 0,
      stale,
      feedStatus: this.feedStatus,
      commandInFlight: this.inFlight,
      enabled,
      events: this.events,
      scenario: this.state?.scenario ?? null,
      lastRejection: this.lastRejection,
    };
  }

  private notify(): void {
    const snap = this.snapshot();
    for (const fn of this.listeners) fn(snap);
  }
}
