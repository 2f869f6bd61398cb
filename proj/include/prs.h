/* prs — preference-guided tree sampling toolkit, C API.
 *
 * Usage: build a resolved-config JSON document (schema in README.md), open a
 * run handle, invoke commands against it, close it. All heavy state (backend
 * clients, template sets, the deterministic mock landscape) lives behind the
 * handle; every command writes its outputs under the configured directory.
 *
 * Thread safety: a handle may be used from one thread at a time; distinct
 * handles are independent.
 */
#ifndef PRS_H
#define PRS_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PRS_API __declspec(dllexport)
#else
#define PRS_API __attribute__((visibility("default")))
#endif

typedef enum prs_status {
  PRS_OK = 0,
  PRS_ERR_USAGE = 1,    /* bad flags/config; caller mistake */
  PRS_ERR_BACKEND = 2,  /* generation or reward endpoint failed */
  PRS_ERR_DATA = 3,     /* malformed or inconsistent input files */
  PRS_ERR_INTERNAL = 4  /* bug; never expected */
} prs_status;

/* Opaque job handle. */
typedef struct prs_run prs_run;

/* Library version string, e.g. "0.1.0". Static storage; do not free. */
PRS_API const char* prs_version(void);

/* Stable name for a status value, e.g. "usage_error". Static storage. */
PRS_API const char* prs_status_name(prs_status status);

/* Opens a run from resolved-config JSON. On success returns a handle and
 * sets *status to PRS_OK. On failure returns NULL, sets *status, and writes
 * a NUL-terminated message into errbuf (truncated to errbuf_len).
 * status/errbuf may be NULL when the caller does not care. */
PRS_API prs_run* prs_run_open(const char* config_json, prs_status* status, char* errbuf, size_t errbuf_len);

/* Releases the handle. NULL is allowed. */
PRS_API void prs_run_close(prs_run* run);

/* Message from the most recent failed command on this handle; "" when the
 * last command succeeded. Valid until the next call on the handle. */
PRS_API const char* prs_run_last_error(const prs_run* run);

/* Commands. Each returns PRS_OK or an error status; on error the message is
 * available via prs_run_last_error. Outputs are documented in README.md. */
PRS_API prs_status prs_run_sample(prs_run* run);
PRS_API prs_status prs_run_compare(prs_run* run);
PRS_API prs_status prs_run_sweep(prs_run* run);
PRS_API prs_status prs_run_build_dataset(prs_run* run);
PRS_API prs_status prs_run_annotate_preferences(prs_run* run);

/* Aggregates a persisted tree file into a metrics report. On PRS_OK,
 * *metrics_json receives a heap-allocated JSON document; release it with
 * prs_string_free. */
PRS_API prs_status prs_run_stats(prs_run* run, const char* trees_path, char** metrics_json);

/* Non-fatal warnings accumulated on the handle, as a heap-allocated JSON
 * array of strings; release with prs_string_free. */
PRS_API prs_status prs_run_warnings(prs_run* run, char** warnings_json);

/* Frees strings returned through char** out-parameters. NULL is allowed. */
PRS_API void prs_string_free(char* s);

/* Standalone reward helper: mean of ROUGE-1, ROUGE-2, and ROUGE-L F1 over
 * lowercased, punctuation-stripped, whitespace-tokenized text. Writes the
 * score into *score and returns PRS_OK, or PRS_ERR_USAGE on NULL inputs. */
PRS_API prs_status prs_rouge_score(const char* candidate, const char* reference, double* score);

#ifdef __cplusplus
}
#endif

#endif /* PRS_H */
