// Thin client over the campaign service's versioned endpoints.

import type { Command, CommandResponse, StateResponse } from './types.js';
import { parseCsv, type CsvTable } from './csv.js';
import type { FetchLike } from './feed.js';

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!res.ok) throw new Error(`${path}: HTTP ${res.status}`);
    return (await res.json()) as T;
  }

  getState(): Promise<StateResponse> {
    return this.getJson<StateResponse>('/api/v1/state');
  }

  async postCommand(command: Command): Promise<CommandResponse> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/v1/command`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(command),
    });
    if (!res.ok) throw new Error(`command: HTTP ${res.status}`);
    return (await res.json()) as CommandResponse;
  }

  private async getCsv(path: string): Promise<CsvTable> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!res.ok) throw new Error(`${path}: HTTP ${res.status}`);
    return parseCsv(await res.text());
  }

  fluenceMap(power: number, grid = 2e-5): Promise<CsvTable> {
    return this.getCsv(`/api/v1/fluence-map?power=${power}&grid=${grid}`);
  }

  compensationProfile(): Promise<CsvTable> {
    return this.getCsv('/api/v1/compensation-profile');
  }
}
