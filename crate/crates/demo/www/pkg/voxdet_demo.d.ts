/* tslint:disable */
/* eslint-disable */

export class Scene {
    free(): void;
    [Symbol.dispose](): void;
    detect(r_a: number, r_n: number, cube: boolean): number;
    /**
     * Flattened `[x, y, z, confidence, ...]`.
     */
    detections(): Float64Array;
    /**
     * Returns `[average precision, precision at recall 0.9 or NaN]`.
     */
    evaluate(r_match: number): Float64Array;
    constructor(size: number, n_objects: number, noise_std: number, seed: number);
    /**
     * Flattened `[recall, precision, ...]` pairs of the last evaluation.
     */
    pr_points(): Float64Array;
    /**
     * `intensity = false` uses the oracle label map.
     */
    set_source(intensity: boolean): void;
    size(): number;
    /**
     * Layer 0 = image, 1 = prediction, 2 = averaged.
     */
    slice_rgba(layer: number, z: number): Uint8Array;
    truth(): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly scene_detect: (a: number, b: number, c: number, d: number) => number;
    readonly scene_detections: (a: number) => [number, number];
    readonly scene_evaluate: (a: number, b: number) => [number, number, number, number];
    readonly scene_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly scene_pr_points: (a: number) => [number, number];
    readonly scene_set_source: (a: number, b: number) => [number, number];
    readonly scene_size: (a: number) => number;
    readonly scene_slice_rgba: (a: number, b: number, c: number) => [number, number, number, number];
    readonly scene_truth: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
