/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_scenariorun_free: (a: number, b: number) => void;
export const correct_order: (a: number, b: number, c: number, d: number) => [number, number];
export const plan_grid: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
export const run_scenario: (a: number, b: number, c: number) => [number, number, number];
export const scenariorun_map: (a: number) => [number, number];
export const scenariorun_map_size: (a: number) => number;
export const scenariorun_summary: (a: number) => [number, number];
export const scenariorun_trace: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
