/* tslint:disable */
/* eslint-disable */

/**
 * `{x, curves}` for `T_0..T_max_degree` on an even grid over `[-1, 1]`.
 */
export function chebyshev_curves(max_degree: number, points: number): string;

/**
 * Train on a synthetic dataset (`"fair"` or `"mixed"`) and forecast its
 * test days next to the persistence baseline.
 */
export function forecast_demo(preset: string, sigma: number, seed: number, horizon: number, joint: boolean): string;

/**
 * Recursive predictions of random models with a chosen coefficient L1 norm.
 */
export function recursion_demo(l1_norm: number, horizon: number, paths: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly chebyshev_curves: (a: number, b: number) => [number, number, number, number];
    readonly forecast_demo: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly recursion_demo: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
