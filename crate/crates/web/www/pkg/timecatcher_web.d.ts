/* tslint:disable */
/* eslint-disable */

export class Decomposition {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly seasonal: Float64Array;
    readonly trend: Float64Array;
}

export class JumpSeries {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Row indices of the level shifts.
     */
    readonly jumps: Uint32Array;
    readonly values: Float64Array;
}

export class VolatilityMask {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly amplitude: Float64Array;
    readonly direction: Float64Array;
    readonly mask: Float64Array;
}

/**
 * Splits `values` into an EMA trend and the seasonal remainder.
 */
export function ema_decompose(values: Float64Array, alpha: number): Decomposition;

export function synth_jump_series(length: number, jumps: number, jump_scale: number, noise: number, seed: number): JumpSeries;

/**
 * Flags forecast steps whose windowed swing reaches `tau` times the input range.
 */
export function volatility_mask(input: Float64Array, forecast: Float64Array, window: number, tau: number): VolatilityMask;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_decomposition_free: (a: number, b: number) => void;
    readonly __wbg_jumpseries_free: (a: number, b: number) => void;
    readonly __wbg_volatilitymask_free: (a: number, b: number) => void;
    readonly decomposition_seasonal: (a: number) => [number, number];
    readonly decomposition_trend: (a: number) => [number, number];
    readonly ema_decompose: (a: number, b: number, c: number) => [number, number, number];
    readonly jumpseries_jumps: (a: number) => [number, number];
    readonly jumpseries_values: (a: number) => [number, number];
    readonly synth_jump_series: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly volatility_mask: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly volatilitymask_amplitude: (a: number) => [number, number];
    readonly volatilitymask_direction: (a: number) => [number, number];
    readonly volatilitymask_mask: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
