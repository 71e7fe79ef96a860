/*
 * Copyright 2026 The mialab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


/* C interface to the mialab experiment library.
 *
 * Every function returns a mialab_status. On failure the message is kept in
 * thread-local storage until the next call on the same thread; read it with
 * mialab_last_error(). Strings handed out through char** parameters belong to
 * the caller and are released with mialab_free_string(). */

#ifndef MIALAB_MIALAB_H_
#define MIALAB_MIALAB_H_

#include <stddef.h>

#if defined(_WIN32)
#define MIALAB_API __declspec(dllexport)
#else
#define MIALAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mialab_status {
  MIALAB_OK = 0,
  MIALAB_ERR_RUNTIME = 1,   /* training or attack failure */
  MIALAB_ERR_CONFIG = 2,    /* configuration rejected */
  MIALAB_ERR_IO = 3,
  MIALAB_ERR_ARGUMENT = 4,  /* bad call: null handle, unknown field, ... */
  MIALAB_ERR_INVARIANT = 5  /* inconsistent data, e.g. a report that fails recomputation */
} mialab_status;

typedef struct mialab_config mialab_config;
typedef struct mialab_report mialab_report;

MIALAB_API const char* mialab_version(void);
MIALAB_API const char* mialab_last_error(void);
MIALAB_API void mialab_free_string(char* s);

/* --- configuration --- */

/* Benchmark defaults. */
MIALAB_API mialab_status mialab_config_new(mialab_config** out);
MIALAB_API mialab_status mialab_config_load(const char* path, mialab_config** out);
MIALAB_API mialab_status mialab_config_from_json(const char* json, mialab_config** out);
MIALAB_API mialab_status mialab_config_clone(const mialab_config* config,
                                             mialab_config** out);
/* Sets one field by dotted path, e.g. "target.epochs" or "shadow.count", to a
 * JSON literal ("12", "\"mmd\"", "null", "[1,2]"). */
MIALAB_API mialab_status mialab_config_set(mialab_config* config, const char* key,
                                           const char* json_value);
MIALAB_API mialab_status mialab_config_validate(const mialab_config* config);
MIALAB_API mialab_status mialab_config_to_json(const mialab_config* config, char** out);
MIALAB_API void mialab_config_free(mialab_config* config);

/* --- stages --- */

/* Writes dataset.csv and split.json into out_dir. */
MIALAB_API mialab_status mialab_generate_data(const mialab_config* config,
                                              const char* out_dir);
/* Trains the target model only. Writes checkpoints/target.json,
 * history/target.csv, train_config.json and accuracy.json into out_dir. */
MIALAB_API mialab_status mialab_train_target(const mialab_config* config,
                                             const char* out_dir);
/* Writes validation_attacks.csv and validation_attacks.json into out_dir. The
 * config must select an MMD defense. */
MIALAB_API mialab_status mialab_run_validation_check(const mialab_config* config,
                                                     const char* out_dir);

/* --- experiments --- */

MIALAB_API mialab_status mialab_run_experiment(const mialab_config* config,
                                               mialab_report** out);
/* defenses: names such as "mmd+mixup". values: swept MMD weights or DP noise
 * scales, may be empty when no defense is tunable. */
MIALAB_API mialab_status mialab_run_defense_comparison(const mialab_config* config,
                                                       const char* const* defenses,
                                                       size_t num_defenses,
                                                       const double* values,
                                                       size_t num_values,
                                                       mialab_report** out);
MIALAB_API mialab_status mialab_run_size_sweep(const mialab_config* config,
                                               const size_t* sizes, size_t num_sizes,
                                               mialab_report** out);

/* --- reports --- */

MIALAB_API mialab_status mialab_report_num_runs(const mialab_report* report, size_t* out);
/* Numeric field of run `index`: "a_r", "a_e", "g", "v", "validation_v",
 * "train_size", "sweep_value", or "adv:<attack name>". NaN when unset. */
MIALAB_API mialab_status mialab_report_get(const mialab_report* report, size_t index,
                                           const char* field, double* out);
MIALAB_API mialab_status mialab_report_to_csv(const mialab_report* report, char** out);
MIALAB_API mialab_status mialab_report_to_json(const mialab_report* report, char** out);
MIALAB_API mialab_status mialab_report_write(const mialab_report* report,
                                             const char* out_dir);
MIALAB_API void mialab_report_free(mialab_report* report);

/* Recomputes every derived field of a report.json file. MIALAB_ERR_INVARIANT
 * when something does not match; *summary (optional) gets a table of runs. */
MIALAB_API mialab_status mialab_check_report_file(const char* path, char** summary);

#ifdef __cplusplus
}
#endif

#endif /* MIALAB_MIALAB_H_ */
