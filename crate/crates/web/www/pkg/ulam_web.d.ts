/* tslint:disable */
/* eslint-disable */

/**
 * Epsilon chain for an input defect `eps` and step constant `k`.
 */
export function budget_json(eps: number, k: number): string;

/**
 * Perturb a Haar-conjugated exact map by `eta` and run the pipeline on it.
 * `shape` and `multiplicities` are comma-separated block sizes.
 */
export function recover_json(shape: string, multiplicities: string, eta: number, seed: bigint): string;

/**
 * `(κ_n, log2 δ_n)` for `n ≤ levels`.
 */
export function schedule_json(eps1: number, levels: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly budget_json: (a: number, b: number) => [number, number];
    readonly recover_json: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
    readonly schedule_json: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
