#ifndef MICROSHIFT_H
#define MICROSHIFT_H

/* Generated by cbindgen from microshift-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define MSR_OK 0

/**
 * The model rejected the request (unstable step, non-trapping light,
 * degenerate fit, too few surviving atoms, ...).
 */
#define MSR_ERR_PHYSICS 1

/**
 * The config is malformed or inconsistent.
 */
#define MSR_ERR_CONFIG 2

/**
 * Reading or writing files failed.
 */
#define MSR_ERR_IO 3

/**
 * A required pointer was NULL or a string was not valid UTF-8.
 */
#define MSR_ERR_NULL_ARG 4

/**
 * Result artifacts of one experiment run (opaque).
 */
typedef struct MsrBundle MsrBundle;

/**
 * Parsed experiment config (opaque).
 */
typedef struct MsrConfig MsrConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string, e.g. "0.1.0".
 */
const char *msr_version(void);

/**
 * Message of the most recent failure on this thread, or NULL if the last
 * call succeeded. Valid until the next failing call on the same thread.
 */
const char *msr_last_error(void);

/**
 * Parse and validate a TOML experiment config from text.
 *
 * # Safety
 * `toml_text` must be NUL-terminated; `out` must point to writable storage.
 */
int msr_config_parse(const char *toml_text,
                     struct MsrConfig **out);

/**
 * Load, parse, and validate a TOML experiment config from a file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must point to writable storage.
 */
int msr_config_load(const char *path,
                    struct MsrConfig **out);

/**
 * Free a config handle. NULL is ignored.
 *
 * # Safety
 * `config` must come from `msr_config_parse`/`msr_config_load` and must not
 * be used afterwards.
 */
void msr_config_free(struct MsrConfig *config);

/**
 * The config's label (borrowed; valid while the config lives).
 *
 * # Safety
 * `config` must be a live handle or NULL.
 */
const char *msr_config_label(const struct MsrConfig *config);

/**
 * The config's experiment kind, e.g. "transport_scan" (borrowed).
 *
 * # Safety
 * `config` must be a live handle or NULL.
 */
const char *msr_config_experiment(const struct MsrConfig *config);

/**
 * Depth of the central trap described by the config, as a positive
 * temperature-equivalent in microkelvin.
 *
 * # Safety
 * `config` must be a live handle; `depth_uk` must point to writable storage.
 */
int msr_trap_depth_uk(const struct MsrConfig *config,
                      double *depth_uk);

/**
 * Radial and axial oscillation frequencies of the central trap (kHz, not
 * angular). Either output pointer may be NULL to skip it.
 *
 * # Safety
 * `config` must be a live handle; non-NULL outputs must be writable.
 */
int msr_trap_frequencies_khz(const struct MsrConfig *config,
                             double *radial_khz,
                             double *axial_khz);

/**
 * Run the experiment a config describes. `seed_override` may be NULL to use
 * the config's own seed. The bundle already carries its provenance stamp.
 *
 * # Safety
 * `config` must be a live handle; `out` must point to writable storage;
 * `seed_override` must be NULL or point to a readable u64.
 */
int msr_run(const struct MsrConfig *config,
            const uint64_t *seed_override,
            struct MsrBundle **out);

/**
 * Free a bundle handle. NULL is ignored.
 *
 * # Safety
 * `bundle` must come from `msr_run` and must not be used afterwards.
 */
void msr_bundle_free(struct MsrBundle *bundle);

/**
 * Number of artifacts in the bundle.
 *
 * # Safety
 * `bundle` must be a live handle or NULL.
 */
size_t msr_bundle_len(const struct MsrBundle *bundle);

/**
 * Name of the artifact at `index` (borrowed), or NULL when out of range.
 *
 * # Safety
 * `bundle` must be a live handle or NULL.
 */
const char *msr_bundle_name(const struct MsrBundle *bundle,
                            size_t index);

/**
 * Content of the named artifact (borrowed), or NULL when absent.
 *
 * # Safety
 * `bundle` must be a live handle or NULL; `name` must be NUL-terminated.
 */
const char *msr_bundle_content(const struct MsrBundle *bundle,
                               const char *name);

/**
 * Write the bundle into `out_dir/<label>` atomically (staging directory
 * plus rename; an existing bundle is never overwritten).
 *
 * # Safety
 * `bundle` must be a live handle; `out_dir` must be NUL-terminated.
 */
int msr_bundle_write(const struct MsrBundle *bundle,
                     const char *out_dir);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MICROSHIFT_H */
