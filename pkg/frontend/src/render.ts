// Pure string renderers for the console's graphics. Building SVG/table
// markup as strings keeps them unit-testable without a DOM.

import type { FluenceSample, ProfilePoint } from './csv.js';
import type { CampaignEvent, ScenarioSummary } from './types.js';

const UM = 1e6;

function scale(v: number, lo: number, hi: number, size: number): number {
  return ((v - lo) / (hi - lo)) * size;
}

// ---------------------------------------------------------------------------
// Chip map: chip outline, transport span, defect marker, beam axis overlay
// ---------------------------------------------------------------------------

export function chipMapSvg(
  scenario: ScenarioSummary,
  alignDx: number,
  defectCleared: boolean,
  width = 640,
  height = 200,
): string {
  const [x0, x1] = [scenario.chip_bbox[0][0] ?? 0, scenario.chip_bbox[0][1] ?? 1];
  const [y0, y1] = [scenario.chip_bbox[1][0] ?? 0, scenario.chip_bbox[1][1] ?? 1];
  const sx = (x: number) => scale(x, x0, x1, width);
  const sy = (y: number) => height - scale(y, y0, y1, height);
  const [dx, dy] = [scenario.defect_center[0] ?? 0, scenario.defect_center[1] ?? 0];
  const [fx, fy] = [scenario.defect_footprint[0] ?? 0, scenario.defect_footprint[1] ?? 0];
  const [t0, t1] = [scenario.transport_span[0] ?? 0, scenario.transport_span[1] ?? 0];
  const beamX = dx + alignDx;
  const marker = defectCleared
    ? `<rect class="crater" x="${sx(dx - fx / 2).toFixed(1)}" y="${sy(dy + fy / 2).toFixed(1)}"
         width="${(sx(dx + fx / 2) - sx(dx - fx / 2)).toFixed(1)}"
         height="${(sy(dy - fy / 2) - sy(dy + fy / 2)).toFixed(1)}"
         fill="none" stroke="#7a7" stroke-dasharray="4 3"/>`
    : `<rect class="defect" x="${sx(dx - fx / 2).toFixed(1)}" y="${sy(dy + fy / 2).toFixed(1)}"
         width="${(sx(dx + fx / 2) - sx(dx - fx / 2)).toFixed(1)}"
         height="${(sy(dy - fy / 2) - sy(dy + fy / 2)).toFixed(1)}"
         fill="#c44" stroke="#822"/>`;
  return `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">
  <rect x="0" y="0" width="${width}" height="${height}" fill="#10141a"/>
  <rect x="${sx(x0)}" y="${sy(y1)}" width="${width}" height="${height}" fill="#1d2430" stroke="#3a4556"/>
  <line class="span" x1="${sx(t0).toFixed(1)}" y1="${sy(0).toFixed(1)}"
        x2="${sx(t1).toFixed(1)}" y2="${sy(0).toFixed(1)}" stroke="#4da3ff" stroke-width="2"/>
  <line class="beam" x1="${sx(beamX).toFixed(1)}" y1="0" x2="${sx(beamX).toFixed(1)}"
        y2="${height}" stroke="#6f6" stroke-dasharray="6 4"/>
  ${marker}
  <text x="${sx(dx).toFixed(1)}" y="${(sy(dy) - 10).toFixed(1)}" class="label"
        fill="#ccc" font-size="11" text-anchor="middle">
    defect ${defectCleared ? '(cleared)' : ''} @ ${(dx * UM).toFixed(0)} um</text>
</svg>`;
}

// ---------------------------------------------------------------------------
// Fluence heatmap (canvas-free: SVG cell grid from the served CSV)
// ---------------------------------------------------------------------------

export function fluenceHeatmapSvg(
  samples: FluenceSample[],
  width = 640,
  height = 200,
): string {
  if (samples.length === 0) return `<svg viewBox="0 0 ${width} ${height}"/>`;
  const xs = samples.map((s) => s.x);
  const ys = samples.map((s) => s.y);
  const fmax = Math.max(...samples.map((s) => s.fluence), 1e-300);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = Math.min(...ys), y1 = Math.max(...ys);
  const uniqueX = new Set(xs).size;
  const uniqueY = new Set(ys).size;
  const cw = width / Math.max(uniqueX - 1, 1);
  const ch = height / Math.max(uniqueY - 1, 1);
  const cells = samples
    .map((s) => {
      // log-scaled intensity: the interesting structure spans many decades
      const rel = Math.log10(Math.max(s.fluence / fmax, 1e-9)) / 9 + 1;
      const px = scale(s.x, x0, x1, width) - cw / 2;
      const py = height - scale(s.y, y0, y1, height) - ch / 2;
      const hue = 240 - 240 * rel;
      return `<rect x="${px.toFixed(1)}" y="${py.toFixed(1)}" width="${cw.toFixed(1)}" height="${ch.toFixed(1)}" fill="hsl(${hue.toFixed(0)} 85% ${(15 + 40 * rel).toFixed(0)}%)"/>`;
    })
    .join('\n  ');
  return `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">
  ${cells}
  <text x="6" y="14" fill="#eee" font-size="11">max ${fmax.toExponential(2)} J/cm^2</text>
</svg>`;
}

// ---------------------------------------------------------------------------
// Compensation profile chart
// ---------------------------------------------------------------------------

export function compensationChartSvg(
  points: ProfilePoint[],
  width = 640,
  height = 220,
): string {
  const bounded = points.filter((p) => p.bounded && p.field !== null);
  if (bounded.length === 0) return `<svg viewBox="0 0 ${width} ${height}"/>`;
  const xsAll = points.map((p) => p.positionUm);
  const x0 = Math.min(...xsAll), x1 = Math.max(...xsAll);
  const fmax = Math.max(...bounded.map((p) => p.field ?? 0));
  const margin = 24;
  const sx = (x: number) => margin + scale(x, x0, x1, width - 2 * margin);
  const sy = (f: number) => height - margin - scale(f, 0, fmax, height - 2 * margin);
  const path = bounded
    .map((p, i) => `${i === 0 ? 'M' : 'L'}${sx(p.positionUm).toFixed(1)},${sy(p.field ?? 0).toFixed(1)}`)
    .join(' ');
  const lossBands = points
    .filter((p) => !p.bounded)
    .map(
      (p) =>
        `<rect class="loss" x="${(sx(p.positionUm) - 3).toFixed(1)}" y="${margin}" width="6" height="${height - 2 * margin}" fill="#27406b" opacity="0.8"/>`,
    )
    .join('\n  ');
  const peak = bounded.reduce((a, b) => ((a.field ?? 0) >= (b.field ?? 0) ? a : b));
  return `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">
  ${lossBands}
  <path d="${path}" fill="none" stroke="#8c6" stroke-width="2"/>
  <circle cx="${sx(peak.positionUm).toFixed(1)}" cy="${sy(peak.field ?? 0).toFixed(1)}" r="4" fill="#fc3"/>
  <text class="peak-label" x="${sx(peak.positionUm).toFixed(1)}" y="${(sy(peak.field ?? 0) - 8).toFixed(1)}"
        fill="#fc3" font-size="12" text-anchor="middle">${(peak.field ?? 0).toFixed(2)} V/m</text>
  <text x="6" y="14" fill="#9ab" font-size="11">compensation field vs axial position (um)</text>
</svg>`;
}

// ---------------------------------------------------------------------------
// Event feed lines
// ---------------------------------------------------------------------------

export function eventLine(event: CampaignEvent): string {
  const t = event.t.toFixed(1).padStart(6);
  switch (event.kind) {
    case 'command': {
      const cmd = event.payload['command'] as { type?: string } | undefined;
      const ok = event.payload['accepted'] ? 'accepted' : `rejected (${event.payload['reason']})`;
      return `#${event.seq} ${t}s command ${cmd?.type ?? '?'} ${ok}`;
    }
    case 'pulse_fired':
      return `#${event.seq} ${t}s pulse ${(event.payload['fluence_j_cm2'] as number).toFixed(2)} J/cm^2`;
    case 'defect_cleared':
      return `#${event.seq} ${t}s *** defect cleared ***`;
    case 'transport_verified': {
      const p = event.payload;
      return `#${event.seq} ${t}s transport ${p['n_trials']} trials, ${p['n_failures']} failures`;
    }
    case 'scan_completed': {
      const est = event.payload['estimate_m'];
      return est == null
        ? `#${event.seq} ${t}s scan: no signal`
        : `#${event.seq} ${t}s scan: height ${((est as number) * UM).toFixed(1)} um`;
    }
    case 'compensation_surveyed': {
      const peak = event.payload['peak_field_v_per_m'];
      return `#${event.seq} ${t}s survey: peak ${peak == null ? 'n/a' : (peak as number).toFixed(2)} V/m`;
    }
    default:
      return `#${event.seq} ${t}s ${event.kind}`;
  }
}
