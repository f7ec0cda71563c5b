#ifndef MAPSTORY_H
#define MAPSTORY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MapstoryStatus {
  MAPSTORY_STATUS_OK = 0,
  MAPSTORY_STATUS_NULL_ARGUMENT = 1,
  MAPSTORY_STATUS_INVALID_UTF8 = 2,
  MAPSTORY_STATUS_CONFIG = 3,
  MAPSTORY_STATUS_INVALID_IMAGE = 4,
  MAPSTORY_STATUS_INVALID_ASPECTS = 5,
  MAPSTORY_STATUS_UNKNOWN_CATEGORY = 6,
  MAPSTORY_STATUS_INFERENCE = 7,
  MAPSTORY_STATUS_PANIC = 8,
} MapstoryStatus;

/**
 * Loaded keyword classifiers, decision tree and story settings.
 */
typedef struct MapstoryPipeline MapstoryPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens a pipeline from a service config file (TOML).
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out` must be writable.
 */
enum MapstoryStatus mapstory_pipeline_open(const char *config_path, struct MapstoryPipeline **out);

/**
 * Opens a pipeline with deterministic mock classifiers over the
 * vocabularies in `vocab_path` and the built-in tree.
 *
 * # Safety
 * `vocab_path` must be a NUL-terminated string; `out` must be writable.
 */
enum MapstoryStatus mapstory_pipeline_open_mock(const char *vocab_path,
                                                struct MapstoryPipeline **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `handle` must come from an open call and not be used afterwards.
 */
void mapstory_pipeline_free(struct MapstoryPipeline *handle);

/**
 * Story for an encoded image (PNG or JPEG). `aspects` is a comma list
 * such as "where,what"; NULL selects all four. Writes the JSON response
 * body to `out_json`.
 *
 * # Safety
 * `image` must point to `image_len` readable bytes; `out_json` must be writable.
 */
enum MapstoryStatus mapstory_story(const struct MapstoryPipeline *handle,
                                   const uint8_t *image,
                                   size_t image_len,
                                   const char *aspects,
                                   char **out_json);

/**
 * Single-category prediction; writes `{"label", "scores"}` JSON.
 *
 * # Safety
 * As for [`mapstory_story`]; `category` must be a NUL-terminated string.
 */
enum MapstoryStatus mapstory_predict(const struct MapstoryPipeline *handle,
                                     const char *category,
                                     const uint8_t *image,
                                     size_t image_len,
                                     char **out_json);

/**
 * The story prompt for `keyword_count` keywords and an aspect list
 * (NULL selects all four).
 *
 * # Safety
 * `keywords` must point to `keyword_count` NUL-terminated strings.
 */
enum MapstoryStatus mapstory_compose_prompt(const char *const *keywords,
                                            size_t keyword_count,
                                            const char *aspects,
                                            char **out_prompt);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void mapstory_string_free(char *s);

/**
 * Message of the last failed call on this thread, or NULL after a
 * success. Valid until the next call on the same thread.
 */
const char *mapstory_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *mapstory_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAPSTORY_H */
