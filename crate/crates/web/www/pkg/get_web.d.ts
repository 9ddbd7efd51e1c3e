/* tslint:disable */
/* eslint-disable */

/**
 * Trains on a generated keyword corpus one epoch at a time.
 */
export class Trainer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Prediction with per-evidence attention and kept words for test claim `index`.
     */
    inspect(index: number): string;
    constructor(seed: number, redundancy_rate: number, discard_rate: number);
    /**
     * One pass over the training claims; returns loss and F1 as JSON.
     */
    step(): string;
}

/**
 * Word graph of `text` as JSON: node words, edges and normalized adjacency.
 */
export function graph(text: string, window: number): string;

/**
 * Runs `layers` refinement layers with seeded random weights over the
 * graph of `text` and reports scores and discarded nodes per layer.
 */
export function refine(text: string, window: number, discard_rate: number, layers: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_trainer_free: (a: number, b: number) => void;
    readonly graph: (a: number, b: number, c: number) => [number, number, number, number];
    readonly refine: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly trainer_inspect: (a: number, b: number) => [number, number, number, number];
    readonly trainer_new: (a: number, b: number, c: number) => [number, number, number];
    readonly trainer_step: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
