// Client-side mirror of the server's phase transition table. The server
// stays authoritative; this only decides which controls are enabled so the
// console never issues a command the displayed phase would reject.

import type { CommandType, Phase } from './types.js';

const STABLE: readonly Phase[] = ['ALIGNING', 'ARMED', 'CLEARED'];

const ALLOWED: Record<CommandType, readonly Phase[]> = {
  set_power: STABLE,
  align: STABLE,
  fire_burst: ['ARMED', 'CLEARED'],
  scan_height: STABLE,
  verify_transport: STABLE,
  compensation_survey: STABLE,
  capture_snapshot: STABLE,
};

export function isCommandAllowed(phase: Phase | null, type: CommandType): boolean {
  if (phase === null) return false;
  return ALLOWED[type].includes(phase);
}

export function allowedCommands(phase: Phase | null): CommandType[] {
  return (Object.keys(ALLOWED) as CommandType[]).filter((t) => isCommandAllowed(phase, t));
}
