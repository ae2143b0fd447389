/* tslint:disable */
/* eslint-disable */

/**
 * Stabilized inf-sup constant as a function of the pressure weight.
 */
export function infsup_sweep(n: number, pressure: string, deltas: Float64Array): string;

/**
 * Sign-condition margins `⟨A(x) − b, SΨ(x)⟩ / ‖x‖²` for the manufactured
 * Navier-Stokes data.
 */
export function sign_margins(n: number, mu: number, velocity: string, samples: number, seed: bigint): string;

/**
 * Regularized lid-driven cavity with P1-P1, returning nodal fields.
 */
export function solve_cavity(n: number, mu: number, pressure: string, velocity: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly infsup_sweep: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly sign_margins: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly solve_cavity: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
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
