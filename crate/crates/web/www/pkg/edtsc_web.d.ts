/* tslint:disable */
/* eslint-disable */

/**
 * One finished simulation, kept on the Rust side.
 */
export class Run {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * A logged signal by its CSV column name, or `undefined`.
     */
    column(name: string): Float64Array | undefined;
    /**
     * `key=value` lines, as in metrics.txt.
     */
    metrics(): string;
}

/**
 * Reductions of `on` against `off`, as `key=value` lines.
 */
export function compare_runs(on: Run, off: Run): string;

/**
 * Physical input scales: `[slip_scale, yaw_error_scale]`.
 */
export function fis_scales(): Float64Array;

/**
 * Left or right FIS correction on an `n x n` grid of normalised inputs,
 * row-major with slip in `[0, 1]` down the rows and yaw-rate error in
 * `[-1, 1]` across the columns.
 */
export function fis_surface(n: number, left: boolean): Float64Array;

/**
 * Runs `track` or `dlc` with the shipped defaults.
 */
export function simulate(scenario: string, speed_kmh: number, fis: boolean, duration: number): Run;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_run_free: (a: number, b: number) => void;
    readonly compare_runs: (a: number, b: number) => [number, number, number, number];
    readonly fis_scales: () => [number, number];
    readonly fis_surface: (a: number, b: number) => [number, number];
    readonly run_column: (a: number, b: number, c: number) => [number, number];
    readonly run_metrics: (a: number) => [number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
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
