/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_scene_free: (a: number, b: number) => void;
export const scene_detect: (a: number, b: number, c: number, d: number) => number;
export const scene_detections: (a: number) => [number, number];
export const scene_evaluate: (a: number, b: number) => [number, number, number, number];
export const scene_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const scene_pr_points: (a: number) => [number, number];
export const scene_set_source: (a: number, b: number) => [number, number];
export const scene_size: (a: number) => number;
export const scene_slice_rgba: (a: number, b: number, c: number) => [number, number, number, number];
export const scene_truth: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
