/* tslint:disable */
/* eslint-disable */

/**
 * Result of one bundled scenario run.
 */
export class ScenarioRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Map slice at scanner height, row-major, top row first:
     * 0 occupied, 128 unknown, 255 free.
     */
    readonly map: Uint8Array;
    /**
     * Side of the square map slice in cells.
     */
    readonly map_size: number;
    readonly summary: string;
    readonly trace: string;
}

/**
 * Menu item a misheard word most likely meant, or an empty string when the
 * answer is unclear. `menu` is comma separated.
 */
export function correct_order(heard: string, menu: string): string;

/**
 * A* over a `width` x `height` grid where nonzero `blocked` bytes are
 * walls. Returns the path as flat `x, y` pairs, empty if there is none.
 */
export function plan_grid(width: number, height: number, blocked: Uint8Array, sx: number, sy: number, gx: number, gy: number): Uint32Array;

/**
 * Runs the bundled scenario for `task`. Races are always resolved in the
 * fixed order, there are no threads in the browser.
 */
export function run_scenario(task: string, seed: number): ScenarioRun;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_scenariorun_free: (a: number, b: number) => void;
    readonly correct_order: (a: number, b: number, c: number, d: number) => [number, number];
    readonly plan_grid: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly run_scenario: (a: number, b: number, c: number) => [number, number, number];
    readonly scenariorun_map: (a: number) => [number, number];
    readonly scenariorun_map_size: (a: number) => number;
    readonly scenariorun_summary: (a: number) => [number, number];
    readonly scenariorun_trace: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
