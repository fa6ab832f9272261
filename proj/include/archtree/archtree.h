/* Copyright (c) 2026 The archtree authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the archtree latency-aware structured-pruning engine.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Functions return AT_OK on success or an error code; at_last_error() then
 * carries a human-readable message (thread-local, valid until the next call
 * on the same thread). Strings returned through char** outputs are owned by
 * the caller and must be released with at_string_free().
 */

#ifndef ARCHTREE_H
#define ARCHTREE_H

#include <stddef.h>

#if defined(_WIN32)
#define AT_API __declspec(dllexport)
#else
#define AT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum at_status {
    AT_OK = 0,
    AT_ERR_ARGUMENT = 1,     /* bad parameter */
    AT_ERR_IO = 2,           /* file system failure */
    AT_ERR_FORMAT = 3,       /* malformed file content */
    AT_ERR_VALIDATION = 4,   /* model violates a graph invariant */
    AT_ERR_UNSUPPORTED = 5,  /* layer kind or feature outside the format */
    AT_ERR_PROVIDER = 6,     /* latency backend failure */
    AT_ERR_UNMEASURED = 7,   /* replay table miss */
    AT_ERR_TIMEOUT = 8,      /* external benchmark command timed out */
    AT_ERR_FINGERPRINT = 9,  /* cache belongs to another model/provider pair */
    AT_ERR_INFEASIBLE = 10,  /* no child meets the step latency goal */
    AT_ERR_INTERNAL = 11
} at_status;

typedef struct at_model at_model;
typedef struct at_groups at_groups;
typedef struct at_provider at_provider;
typedef struct at_cache at_cache;
typedef struct at_run_result at_run_result;

AT_API const char* at_version(void);
AT_API const char* at_status_name(at_status status);

/* Message for the most recent failure on this thread. */
AT_API const char* at_last_error(void);

AT_API void at_string_free(char* s);

/* ---- models ------------------------------------------------------------ */

/* Loads a model manifest plus its weights file. Pass NULL for weights_path
 * to use "<manifest stem>.bin". */
AT_API at_status at_model_load(const char* manifest_path, const char* weights_path,
                               at_model** out);
AT_API at_status at_model_save(const at_model* model, const char* manifest_path,
                               const char* weights_path);
AT_API void at_model_free(at_model* model);

/* JSON array of {"layer","message"} objects; "[]" when the model is valid. */
AT_API at_status at_model_validate(const at_model* model, char** violations_json);

/* JSON array of per-group channel counts, e.g. "[4,8,6,3]". */
AT_API at_status at_model_signature(const at_model* model, char** counts_json);

AT_API at_status at_model_param_count(const at_model* model, unsigned long long* out);

/* ---- channel groups ----------------------------------------------------- */

AT_API at_status at_groups_build(const at_model* model, at_groups** out);
AT_API void at_groups_free(at_groups* groups);

/* JSON array of {"index","channels","prunable","members":[{"layer","port"}]}. */
AT_API at_status at_groups_describe(const at_groups* groups, char** json);

/* ---- latency providers -------------------------------------------------- */

/* spec_json: {"kind":"analytical","params":{...}} |
 *            {"kind":"replay","path":"table.jsonl"} |
 *            {"kind":"command","template":"bench {model_path} {warmup} {iters}",
 *             "timeout_s":300} */
AT_API at_status at_provider_create(const char* spec_json, at_provider** out);
AT_API void at_provider_free(at_provider* provider);

/* protocol_json: {"warmup_iters":100,"measure_iters":300,"aggregate":"median"};
 * NULL selects the exploration protocol. */
AT_API at_status at_provider_measure(at_provider* provider, const at_model* model,
                                     const char* protocol_json, double* out_ms);

/* ---- latency cache ------------------------------------------------------ */

/* Fingerprint tying a cache file to one (root model, provider) pair. */
AT_API at_status at_fingerprint(const at_model* root_model, const char* provider_spec_json,
                                char** hex);

/* Opens or creates a cache file; NULL path gives an in-memory cache. An
 * existing file must carry the same fingerprint. */
AT_API at_status at_cache_open(const char* path, const char* fingerprint_hex, at_cache** out);
AT_API void at_cache_free(at_cache* cache);

/* Counters since this handle was opened:
 * {"hits":h,"misses":m,"hit_rate":r,"entries":n}. */
AT_API at_status at_cache_stats(const at_cache* cache, char** stats_json);

/* Memoized measurement: stored value on a hit, one provider call on a miss. */
AT_API at_status at_cache_get_or_measure(at_cache* cache, at_provider* provider,
                                         const at_model* model, const char* protocol_json,
                                         double* out_ms);

/* Offline view of a cache file and its recorded event log.
 * stats_json: {"fingerprint","entries","hits","misses","hit_rate"};
 * timeline_csv: "run,seq,hit,signature,ms" rows. Either output may be NULL. */
AT_API at_status at_cache_inspect(const char* path, char** stats_json, char** timeline_csv);

/* ---- search ------------------------------------------------------------- */

/* config_json mirrors the run manifest: search fields (steps, beam_width,
 * goal, policy, early_stopping, reductions, train, finetune, seed, workers,
 * ...) plus optional "dataset" ({"kind":"blobs",...} or
 * {"kind":"csv","path":...,"label_column":...}) and optional
 * "importance" ({"manifest": path}) for externally computed importances. */
AT_API at_status at_search_run(const at_model* root_model, const char* config_json,
                               at_provider* provider, at_cache* cache /* nullable */,
                               at_run_result** out);
AT_API void at_run_result_free(at_run_result* result);

AT_API at_status at_run_result_report(const at_run_result* result, char** report_json);
AT_API at_status at_run_result_count(const at_run_result* result, size_t* count);

/* Pruned model i (0 = highest validation accuracy); caller frees. */
AT_API at_status at_run_result_model(const at_run_result* result, size_t index, at_model** out);

/* ---- latency curves ------------------------------------------------------ */

/* Fine (one channel per probe) and adaptive (search stride) sweeps of one
 * group; CSV columns channels_left,ms,sweep. */
AT_API at_status at_curve_csv(const at_model* model, int group_index, at_provider* provider,
                              at_cache* cache /* nullable */, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* ARCHTREE_H */
