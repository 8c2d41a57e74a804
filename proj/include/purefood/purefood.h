/*
 * Copyright 2026 The purefood Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the purefood engine. Every fallible call returns a
 * pf_status; the message of the last failure on the calling thread is
 * available from pf_last_error(). */

#ifndef PUREFOOD_PUREFOOD_H_
#define PUREFOOD_PUREFOOD_H_

#include <stddef.h>

#if defined(PUREFOOD_BUILDING_LIBRARY)
#define PF_API __attribute__((visibility("default")))
#else
#define PF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pf_status {
  PF_OK = 0,
  PF_ERR_INTERNAL = 1,
  PF_ERR_CONFIG = 2,   /* bad configuration, geometry, shape or range */
  PF_ERR_DATA = 3,     /* I/O, malformed files or labels */
  PF_ERR_MISMATCH = 4  /* weights do not belong to the model spec */
} pf_status;

typedef struct pf_config pf_config;
typedef struct pf_model pf_model;
typedef struct pf_tensor pf_tensor;

PF_API const char* pf_version(void);
PF_API const char* pf_last_error(void);

/* Run configuration: flat key/value pairs with library defaults. */
PF_API pf_status pf_config_create(pf_config** out);
PF_API void pf_config_destroy(pf_config* config);
PF_API pf_status pf_config_set(pf_config* config, const char* key, const char* value);
/* The returned string lives until the next set/load on `config`. */
PF_API pf_status pf_config_get(const pf_config* config, const char* key, const char** value);
PF_API pf_status pf_config_load_file(pf_config* config, const char* path);

PF_API size_t pf_config_key_count(void);
PF_API const char* pf_config_key_name(size_t index);
PF_API const char* pf_config_key_default(size_t index);
PF_API const char* pf_config_key_help(size_t index);
/* Non-zero when the key is read by `command`. */
PF_API int pf_config_key_used_by(size_t index, const char* command);

/* Commands print progress to stdout and errors to stderr. The status is also
 * the intended process exit code. */
PF_API pf_status pf_run(const char* command, const pf_config* config);
PF_API pf_status pf_cmd_train(const pf_config* config);
PF_API pf_status pf_cmd_finetune(const pf_config* config);
PF_API pf_status pf_cmd_eval(const pf_config* config);
PF_API pf_status pf_cmd_predict(const pf_config* config);
PF_API pf_status pf_cmd_inspect(const pf_config* config);
PF_API pf_status pf_cmd_diagnose(const pf_config* config);
PF_API pf_status pf_cmd_dump_batch(const pf_config* config);
PF_API pf_status pf_cmd_augment_preview(const pf_config* config);

/* Float32 tensors in (i, h, w, c) row-major order. */
PF_API pf_status pf_tensor_create(const size_t shape[4], const float* data, pf_tensor** out);
PF_API pf_status pf_tensor_load(const char* path, pf_tensor** out);
PF_API pf_status pf_tensor_save(const pf_tensor* tensor, const char* path);
PF_API void pf_tensor_shape(const pf_tensor* tensor, size_t shape[4]);
PF_API const float* pf_tensor_data(const pf_tensor* tensor);
PF_API void pf_tensor_destroy(pf_tensor* tensor);

/* Model spec plus PFW1 weights. */
PF_API pf_status pf_model_load(const char* spec_path, const char* weights_path, pf_model** out);
PF_API pf_status pf_model_save_weights(const pf_model* model, const char* path);
PF_API size_t pf_model_num_outputs(const pf_model* model);
PF_API void pf_model_input_shape(const pf_model* model, size_t shape[4]);
/* Inference-mode forward of a batch; `*out` is (n, 1, 1, outputs). */
PF_API pf_status pf_model_predict(const pf_model* model, const pf_tensor* images, pf_tensor** out);
PF_API void pf_model_destroy(pf_model* model);

#ifdef __cplusplus
}
#endif

#endif /* PUREFOOD_PUREFOOD_H_ */
