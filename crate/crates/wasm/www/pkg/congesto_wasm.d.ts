/* tslint:disable */
/* eslint-disable */

/**
 * Two blobs on a collision course, advanced one adaptive step at a time.
 */
export class BlobRun {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Advances up to `steps` solver steps; stops early at the crossing time.
     */
    advance(steps: number): void;
    mass(): number;
    max_rho_ratio(): number;
    n(): number;
    constructor(n: number, eps: number, speed: number);
    /**
     * `rho / phi_star`, row-major with x fastest.
     */
    packing(): Float64Array;
    t(): number;
    t_end(): number;
}

/**
 * `mu`, `lambda` and `pi` on `n` densities in `(0, rho_max_fraction phi_star]`, as JSON.
 */
export function law_curves(eps: number, a: number, gamma: number, delta: number, n: number, rho_max_fraction: number): string;

/**
 * Log-log ladders of the congestion product (three regimes) and of the
 * incompressible-start expansion remainder, with fitted slopes, as JSON.
 */
export function limit_ladders(a: number, pi0: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_blobrun_free: (a: number, b: number) => void;
    readonly blobrun_advance: (a: number, b: number) => [number, number];
    readonly blobrun_mass: (a: number) => number;
    readonly blobrun_max_rho_ratio: (a: number) => number;
    readonly blobrun_n: (a: number) => number;
    readonly blobrun_new: (a: number, b: number, c: number) => [number, number, number];
    readonly blobrun_packing: (a: number) => [number, number];
    readonly blobrun_t: (a: number) => number;
    readonly blobrun_t_end: (a: number) => number;
    readonly law_curves: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly limit_ladders: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
