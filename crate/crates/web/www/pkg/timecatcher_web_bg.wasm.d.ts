/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_decomposition_free: (a: number, b: number) => void;
export const __wbg_jumpseries_free: (a: number, b: number) => void;
export const __wbg_volatilitymask_free: (a: number, b: number) => void;
export const decomposition_seasonal: (a: number) => [number, number];
export const decomposition_trend: (a: number) => [number, number];
export const ema_decompose: (a: number, b: number, c: number) => [number, number, number];
export const jumpseries_jumps: (a: number) => [number, number];
export const jumpseries_values: (a: number) => [number, number];
export const synth_jump_series: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const volatility_mask: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const volatilitymask_amplitude: (a: number) => [number, number];
export const volatilitymask_direction: (a: number) => [number, number];
export const volatilitymask_mask: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
