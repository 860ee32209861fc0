/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_blobrun_free: (a: number, b: number) => void;
export const blobrun_advance: (a: number, b: number) => [number, number];
export const blobrun_mass: (a: number) => number;
export const blobrun_max_rho_ratio: (a: number) => number;
export const blobrun_n: (a: number) => number;
export const blobrun_new: (a: number, b: number, c: number) => [number, number, number];
export const blobrun_packing: (a: number) => [number, number];
export const blobrun_t: (a: number) => number;
export const blobrun_t_end: (a: number) => number;
export const law_curves: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const limit_ladders: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
