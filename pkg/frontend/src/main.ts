// Browser bootstrap: wires the view model to the static page.

import { ConsoleViewModel, type ConsoleSnapshot } from './viewmodel.js';
import { chipMapSvg, compensationChartSvg, eventLine, fluenceHeatmapSvg } from './render.js';
import { fluenceSamples, profilePoints } from './csv.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const vm = new ConsoleViewModel(window.location.origin);

const powerSlider = el<HTMLInputElement>('power');
const powerLabel = el<HTMLSpanElement>('power-label');
const feedList = el<HTMLUListElement>('feed');

function render(snap: ConsoleSnapshot): void {
  el('seq').textContent = `seq ${snap.seq}`;
  el('phase').textContent = snap.phase ?? 'NO SCENARIO';
  el('phase').dataset['phase'] = snap.phase ?? '';
  el('clock').textContent = `${snap.clockS.toFixed(1)} s`;
  el('stale-banner').hidden = !snap.stale;
  el('feed-status').textContent = snap.feedStatus;

  const scattering = el('scattering');
  scattering.textContent = snap.scatteringOn ? 'SCATTERING' : 'no scattering';
  scattering.classList.toggle('on', snap.scatteringOn);

  powerLabel.textContent = `${snap.powerPercent.toFixed(0)}%`;
  const range = snap.scenario?.power_range ?? [10, 80];
  powerSlider.min = String(range[0]);
  powerSlider.max = String(range[1]);

  for (const [type, enabled] of Object.entries(snap.enabled)) {
    document
      .querySelectorAll<HTMLButtonElement>(`[data-command="${type}"]`)
      .forEach((b) => (b.disabled = !enabled));
  }
  powerSlider.disabled = !snap.enabled.set_power;

  if (snap.scenario) {
    el('chip-map').innerHTML = chipMapSvg(snap.scenario, snap.alignDx, snap.defectCleared);
  }

  const recent = snap.events.slice(-40).reverse();
  feedList.innerHTML = recent
    .map((e) => `<li class="kind-${e.kind}">${eventLine(e)}</li>`)
    .join('');
}

async function refreshHeatmap(): Promise<void> {
  const snap = vm.snapshot();
  const table = await vm.api.fluenceMap(snap.powerPercent || 10);
  el('heatmap').innerHTML = fluenceHeatmapSvg(fluenceSamples(table));
}

async function refreshProfile(): Promise<void> {
  const table = await vm.api.compensationProfile();
  el('profile').innerHTML = compensationChartSvg(profilePoints(table));
}

function hook(id: string, fn: () => Promise<unknown>): void {
  el<HTMLButtonElement>(id).addEventListener('click', () => {
    fn().catch((err) => {
      el('error').textContent = String(err);
      setTimeout(() => (el('error').textContent = ''), 4000);
    });
  });
}

hook('btn-align', () => vm.align(0.0, 60e-6));
hook('btn-fire', () => vm.fireBurst(Number(el<HTMLInputElement>('burst-count').value) || 1));
hook('btn-scan', () => vm.scanHeight(-40e-6, 140e-6, 721));
hook('btn-verify', () => vm.verifyTransport(300));
hook('btn-survey', async () => {
  await vm.compensationSurvey();
  await refreshProfile();
});
hook('btn-heatmap', refreshHeatmap);

powerSlider.addEventListener('change', () => {
  vm.setPower(Number(powerSlider.value)).catch(() => undefined);
});

vm.onChange(render);
vm.connect()
  .then(() => refreshProfile())
  .catch((err) => {
    el('error').textContent = `connection failed: ${err}`;
  });
