/*
 * C API for the csg training library. The core is C++; this surface exposes
 * experiment configuration plus the five commands (pretrain, train, eval,
 * diagnose, sweep) behind opaque handles and integer status codes, so CLIs
 * and other language bindings need nothing but this header and libcsg.
 *
 * Conventions:
 *   - every function returns a csg_status; non-zero means failure and
 *     csg_last_error() holds a thread-local message
 *   - char** out parameters receive malloc'd strings owned by the caller;
 *     release them with csg_string_free()
 */

#ifndef CSG_CSG_H
#define CSG_CSG_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct csg_config csg_config; /* opaque experiment configuration */

typedef enum csg_status {
  CSG_OK = 0,
  CSG_ERROR = 1,         /* unclassified failure */
  CSG_ERROR_CONFIG = 2,  /* invalid configuration or arguments */
  CSG_ERROR_NUMERIC = 3, /* numeric abort (non-finite loss or gradient) */
  CSG_ERROR_IO = 4       /* file I/O failure */
} csg_status;

/* ---- configuration ---- */

/* task is "classify" or "dense" */
csg_status csg_config_default(const char* task, csg_config** out);
csg_status csg_config_from_file(const char* path, csg_config** out);
csg_status csg_config_from_json(const char* json_text, csg_config** out);
csg_status csg_config_set_seed(csg_config* cfg, unsigned long long seed);
csg_status csg_config_set_output_dir(csg_config* cfg, const char* dir);
csg_status csg_config_to_json(const csg_config* cfg, char** out_json);
void csg_config_free(csg_config* cfg);

/* ---- commands ----
 * Each writes its artifacts under out_dir and, on success, returns the
 * metrics JSON through out_json (pass NULL to skip). */

csg_status csg_pretrain(const csg_config* cfg, const char* out_dir, char** out_json);

csg_status csg_train(const csg_config* cfg, const char* teacher_checkpoint, const char* out_dir,
                     char** out_json);

/* split: synthetic-train | synthetic-test | realproxy-train | realproxy-test.
 * cfg may be NULL; the config persisted in the checkpoint is used then. */
csg_status csg_eval(const char* checkpoint_dir, const char* split, const csg_config* cfg,
                    char** out_json);

csg_status csg_diagnose(const char* checkpoint_dir, const char* split, const char* out_dir,
                        const csg_config* cfg, char** out_json);

/* axis: M | G | pooling | lambda; values_json: JSON array, e.g. "[0,3,6]" or
 * "[[4],[3,4]]" for G */
csg_status csg_sweep(const csg_config* cfg, const char* axis, const char* values_json,
                     const char* teacher_checkpoint, const char* out_dir, char** out_json);

/* ---- misc ---- */

const char* csg_last_error(void);
void csg_string_free(char* s);
const char* csg_version(void);

#ifdef __cplusplus
}
#endif

#endif /* CSG_CSG_H */
