#ifndef OPENML_H
#define OPENML_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OmlStatus {
  OML_STATUS_OK = 0,
  OML_STATUS_NULL_ARGUMENT = 1,
  OML_STATUS_INVALID_UTF8 = 2,
  OML_STATUS_INVALID_ARGUMENT = 3,
  OML_STATUS_TRANSPORT = 4,
  OML_STATUS_UNAUTHORIZED = 5,
  OML_STATUS_FORBIDDEN = 6,
  OML_STATUS_NOT_FOUND = 7,
  OML_STATUS_REJECTED = 8,
  OML_STATUS_HTTP = 9,
  OML_STATUS_DECODE = 10,
  OML_STATUS_LEARNER = 11,
  OML_STATUS_IO = 12,
  OML_STATUS_PARSE = 13,
  OML_STATUS_PANIC = 14,
} OmlStatus;

typedef struct OmlClient OmlClient;

/**
 * A mock hub serving the bundled fixture on a local port.
 */
typedef struct OmlHub OmlHub;

typedef struct OmlRelation OmlRelation;

/**
 * A locally executed run, not yet uploaded unless `oml_run_upload` succeeded.
 */
typedef struct OmlRun OmlRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *oml_last_error_message(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void oml_string_free(char *s);

/**
 * Library version, statically allocated.
 */
const char *oml_version(void);

/**
 * Starts a mock hub with the bundled fixture on a free local port.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum OmlStatus oml_hub_start(struct OmlHub **out);

/**
 * # Safety
 * `hub` must be a live handle and `out` valid for writes.
 */
enum OmlStatus oml_hub_url(const struct OmlHub *hub, char **out);

/**
 * API requests served so far; 0 for a null handle.
 *
 * # Safety
 * `hub` must be null or a live handle.
 */
uint64_t oml_hub_request_count(const struct OmlHub *hub);

/**
 * Stops the hub and frees the handle. Null is ignored.
 *
 * # Safety
 * `hub` must be null or a live handle, not used afterwards.
 */
void oml_hub_free(struct OmlHub *hub);

/**
 * Creates a client. `apikey` may be null for read-only use.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` valid for writes.
 */
enum OmlStatus oml_client_new(const char *server_url,
                              const char *apikey,
                              const char *cache_dir,
                              struct OmlClient **out);

/**
 * # Safety
 * `client` must be null or a live handle, not used afterwards.
 */
void oml_client_free(struct OmlClient *client);

/**
 * Lists `datasets`, `tasks`, `flows`, `runs` or `evals` as a JSON array.
 * `query` uses URL query syntax, e.g. `number_of_classes=2&data_tag=uci`,
 * and may be null.
 *
 * # Safety
 * `client` must be live, strings NUL-terminated, `out` valid for writes.
 */
enum OmlStatus oml_client_list_json(const struct OmlClient *client,
                                    const char *what,
                                    const char *query,
                                    char **out);

/**
 * Downloads (or reads from cache) one object and returns its JSON description.
 * For data sets this is the description without the data; see
 * `oml_client_get_dataset_arff`.
 *
 * # Safety
 * `client` must be live, `kind` NUL-terminated, `out` valid for writes.
 */
enum OmlStatus oml_client_get_json(const struct OmlClient *client,
                                   const char *kind,
                                   uint64_t id,
                                   char **out);

/**
 * # Safety
 * `client` must be live and `out` valid for writes.
 */
enum OmlStatus oml_client_get_dataset_arff(const struct OmlClient *client, uint64_t id, char **out);

/**
 * Adds (`add` nonzero) or removes a tag.
 *
 * # Safety
 * `client` must be live and strings NUL-terminated.
 */
enum OmlStatus oml_client_tag(const struct OmlClient *client,
                              const char *kind,
                              uint64_t id,
                              const char *tag,
                              int32_t add);

/**
 * Runs a learner (`tree`, `bagged-tree`, `forest`, `majority`) on a task.
 * `params` is null or a comma-separated `name=value` list.
 *
 * # Safety
 * `client` must be live, strings NUL-terminated, `out` valid for writes.
 */
enum OmlStatus oml_run_task(const struct OmlClient *client,
                            uint64_t task_id,
                            const char *learner,
                            const char *params,
                            uint64_t seed,
                            struct OmlRun **out);

/**
 * Mean predictive accuracy over the task's folds.
 *
 * # Safety
 * `run` must be live and `out` valid for writes.
 */
enum OmlStatus oml_run_accuracy(const struct OmlRun *run, double *out);

/**
 * The run (predictions excluded) as JSON.
 *
 * # Safety
 * `run` must be live and `out` valid for writes.
 */
enum OmlStatus oml_run_json(const struct OmlRun *run, char **out);

/**
 * Uploads the learner's flow and the run, optionally tagged; writes the
 * new run id to `out_run_id`.
 *
 * # Safety
 * Handles must be live, `tag` null or NUL-terminated, `out_run_id` valid for writes.
 */
enum OmlStatus oml_run_upload(const struct OmlClient *client,
                              struct OmlRun *run,
                              const char *tag,
                              uint64_t *out_run_id);

/**
 * # Safety
 * `run` must be null or a live handle, not used afterwards.
 */
void oml_run_free(struct OmlRun *run);

/**
 * Parses ARFF text.
 *
 * # Safety
 * `arff` must be NUL-terminated and `out` valid for writes.
 */
enum OmlStatus oml_arff_parse(const char *arff, struct OmlRelation **out);

/**
 * # Safety
 * `rel` must be null or a live handle.
 */
size_t oml_relation_num_rows(const struct OmlRelation *rel);

/**
 * # Safety
 * `rel` must be null or a live handle.
 */
size_t oml_relation_num_attributes(const struct OmlRelation *rel);

/**
 * Writes the relation back to ARFF.
 *
 * # Safety
 * `rel` must be live and `out` valid for writes.
 */
enum OmlStatus oml_relation_to_arff(const struct OmlRelation *rel, char **out);

/**
 * # Safety
 * `rel` must be null or a live handle, not used afterwards.
 */
void oml_relation_free(struct OmlRelation *rel);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPENML_H */
