/* tslint:disable */
/* eslint-disable */

/**
 * Encoder and composer trained on a small procedural corpus.
 */
export class Studio {
    free(): void;
    [Symbol.dispose](): void;
    compose(prompt: string, length: number, seed: number): string;
    constructor(seed: number);
    vocabulary(): string;
}

export function blend(from_freq: number, to_freq: number, seam: number, width: number): string;

export function decode(text: string, sample_rate: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_studio_free: (a: number, b: number) => void;
    readonly blend: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly decode: (a: number, b: number, c: number) => [number, number, number, number];
    readonly studio_compose: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly studio_new: (a: number) => [number, number, number];
    readonly studio_vocabulary: (a: number) => [number, number];
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
