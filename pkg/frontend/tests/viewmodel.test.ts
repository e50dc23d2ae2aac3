import { describe, expect, it } from 'vitest';

import { ConsoleViewModel } from '../src/viewmodel.js';
import type { CampaignEvent, CampaignState } from '../src/types.js';

// In-memory stand-in for the service: accepts commands, bumps seq, serves
// state and bounded event reads with the same wire shapes.
class FakeService {
  seq = 0;
  phase: CampaignState['phase'] = 'ALIGNING';
  scattering = 6.5e-5 * 4e-5;
  events: CampaignEvent[] = [];

  private emit(kind: string, payload: Record<string, unknown>): void {
    this.seq += 1;
    this.events.push({ seq: this.seq, t: 0, kind, payload, state_hash: `h${this.seq}` });
  }

  handle(command: { type: string }): { accepted: boolean; seq: number; reason: string | null } {
    if (command.type === 'fire_burst' && this.phase !== 'ARMED' && this.phase !== 'CLEARED') {
      this.emit('command', { command, accepted: false, reason: 'bad phase' });
      return { accepted: false, seq: this.seq, reason: 'bad phase' };
    }
    this.emit('command', { command, accepted: true, reason: null });
    if (command.type === 'align') {
      this.phase = 'ARMED';
      this.emit('aligned', { on_target: true });
    }
    if (command.type === 'fire_burst') {
      this.emit('pulse_fired', { fluence_j_cm2: 6.8, cleared: true });
      this.emit('defect_cleared', {});
      this.phase = 'CLEARED';
      this.scattering = 0;
      this.emit('burst_completed', { cleared: true });
    }
    return { accepted: true, seq: this.seq, reason: null };
  }

  state() {
    return {
      seq: this.seq,
      state: {
        phase: this.phase,
        seq: this.seq,
        scattering_cross_section_m2: this.scattering,
        power_percent: 10,
        defect_cleared: this.scattering === 0,
      },
      scenario: null,
    };
  }

  fetchImpl = (async (url: RequestInfo | URL, init?: RequestInit) => {
    const u = String(url);
    if (u.endsWith('/api/v1/state')) {
      return new Response(JSON.stringify(this.state()), { status: 200 });
    }
    if (u.includes('/api/v1/command')) {
      const cmd = JSON.parse(String(init?.body)) as { type: string };
      return new Response(JSON.stringify(this.handle(cmd)), { status: 200 });
    }
    if (u.includes('/api/v1/events')) {
      const since = Number(/since=(\d+)/.exec(u)?.[1] ?? 0);
      const body = this.events
        .filter((e) => e.seq > since)
        .map((e) => `id: ${e.seq}\ndata: ${JSON.stringify(e)}\n\n`)
        .join('');
      return new Response(body, { status: 200 });
    }
    return new Response('not found', { status: 404 });
  }) as typeof fetch;
}

async function settle(vm: ConsoleViewModel, svc: FakeService): Promise<void> {
  // the fake service closes each stream after the backlog, so delivery
  // rides the feed's reconnect cycle; wait for seq catch-up
  const deadline = Date.now() + 3000;
  while (vm.feed.lastSeq < svc.seq && Date.now() < deadline) {
    await new Promise((r) => setTimeout(r, 20));
  }
  await vm.settled();
}

describe('console view model', () => {
  it('renders only server-confirmed state with its seq', async () => {
    const svc = new FakeService();
    const vm = new ConsoleViewModel('http://svc', svc.fetchImpl);
    await vm.connect();
    expect(vm.snapshot().phase).toBe('ALIGNING');
    expect(vm.snapshot().scatteringOn).toBe(true);
    expect(vm.snapshot().seq).toBe(0);
    await vm.disconnect();
  });

  it('blocks commands the displayed phase rejects', async () => {
    const svc = new FakeService();
    const vm = new ConsoleViewModel('http://svc', svc.fetchImpl);
    await vm.connect();
    expect(vm.canIssue('fire_burst')).toBe(false);
    await expect(vm.fireBurst(1)).rejects.toThrow(/not allowed/);
    expect(vm.canIssue('align')).toBe(true);
    await vm.disconnect();
  });

  it('fire at full power renders cleared within one event', async () => {
    const svc = new FakeService();
    const vm = new ConsoleViewModel('http://svc', svc.fetchImpl);
    await vm.connect();
    await vm.align(0, 6e-5);
    await settle(vm, svc);
    expect(vm.snapshot().phase).toBe('ARMED');
    const res = await vm.fireBurst(1);
    expect(res.accepted).toBe(true);
    await settle(vm, svc);
    const snap = vm.snapshot();
    expect(snap.phase).toBe('CLEARED');
    expect(snap.scatteringOn).toBe(false);
    expect(snap.seq).toBeGreaterThanOrEqual(vm.feed.lastSeq);
    await vm.disconnect();
  });

  it('rejections are surfaced, not applied', async () => {
    const svc = new FakeService();
    svc.phase = 'ARMED';
    const vm = new ConsoleViewModel('http://svc', svc.fetchImpl);
    await vm.connect();
    svc.phase = 'ALIGNING'; // server moved on: client view is stale
    const res = await vm.fireBurst(1);
    expect(res.accepted).toBe(false);
    await settle(vm, svc);
    expect(vm.snapshot().lastRejection).toBe('bad phase');
    await vm.disconnect();
  });
});
