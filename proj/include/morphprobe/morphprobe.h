// Copyright 2026 The morphprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MORPHPROBE_MORPHPROBE_H_
#define MORPHPROBE_MORPHPROBE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MP_API __declspec(dllexport)
#else
#define MP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Values are stable across releases. */
typedef enum mp_status {
  MP_OK = 0,
  MP_ERR_INVALID_ARGUMENT = 1,
  MP_ERR_INVENTORY = 2,
  MP_ERR_CONFIGURATION = 3,
  MP_ERR_EXHAUSTED = 4,
  MP_ERR_TEMPLATE = 5,
  MP_ERR_RANGE = 6,
  MP_ERR_DOMAIN = 7,
  MP_ERR_DEGENERATE_VARIANCE = 8,
  MP_ERR_IO = 9,
  MP_ERR_INTEGRITY = 10,
  MP_ERR_CORRUPTION = 11,
  MP_ERR_PLAN_MISMATCH = 12,
  MP_ERR_MISSING_ARTIFACT = 13,
  MP_ERR_BACKEND = 14,
  MP_ERR_PROTOCOL = 15,
  MP_ERR_INVARIANT = 16,
  MP_ERR_CANCELLED = 17,
  MP_ERR_INTERNAL = 99
} mp_status;

MP_API const char* mp_version(void);
MP_API const char* mp_status_name(mp_status status);

/* Message of the last failure on the calling thread; "" after success.
   Valid until the next call on the same thread. */
MP_API const char* mp_last_error(void);

/* Frees strings returned through char** out-parameters. NULL is a no-op. */
MP_API void mp_string_free(char* s);

/* ---- Lexicon ----------------------------------------------------------- */

typedef struct mp_lexicon mp_lexicon;

/* options_json: lexicon options object ("{}" or NULL for defaults). */
MP_API mp_status mp_lexicon_generate(const char* options_json, mp_lexicon** out);
MP_API mp_status mp_lexicon_parse(const char* lexicon_json, mp_lexicon** out);
MP_API void mp_lexicon_free(mp_lexicon* lexicon);
MP_API size_t mp_lexicon_size(const mp_lexicon* lexicon);
/* group: "phonestheme", "random_pronounceable", "positive_control", "negative_control". */
MP_API mp_status mp_lexicon_count(const mp_lexicon* lexicon, const char* group, size_t* out);
MP_API mp_status mp_lexicon_serialize(const mp_lexicon* lexicon, char** out_json);

/* Against the bundled wordlist. */
MP_API mp_status mp_is_real_word(const char* surface, int* out);
/* {"onset":..,"nucleus":..,"suffix":..} or "null" when no parse exists. */
MP_API mp_status mp_decompose(const char* surface, char** out_json);

/* ---- Plans ------------------------------------------------------------- */

typedef struct mp_plan mp_plan;

/* options_json carries "kind" and the plan options; lexicon may be NULL
   except for crungus-hunt plans. */
MP_API mp_status mp_plan_build(const char* options_json, const mp_lexicon* lexicon, mp_plan** out);
MP_API void mp_plan_free(mp_plan* plan);
MP_API size_t mp_plan_job_count(const mp_plan* plan);
MP_API mp_status mp_plan_serialize(const mp_plan* plan, char** out_json);
MP_API mp_status mp_plan_hash(const mp_plan* plan, char** out_hex);

/* ---- Metrics and statistics --------------------------------------------- */

MP_API mp_status mp_cosine_similarity(const float* a, const float* b, size_t d, double* out);

/* values: n*d row-major; tags: n NUL-terminated labels. neighbors_out (n
   entries) receives each row's nearest neighbor; hits_out (n entries, may
   be NULL) receives 1 where the neighbor shares the row's tag. */
MP_API mp_status mp_nearest_neighbors(const float* values, uint32_t n, uint32_t d, const char* const* tags,
                                      uint32_t* neighbors_out, uint8_t* hits_out);

typedef struct mp_comparison {
  double t;
  double df;
  double p;
  double d;
} mp_comparison;

MP_API mp_status mp_pooled_t(const double* g1, size_t n1, const double* g2, size_t n2, mp_comparison* out);
MP_API mp_status mp_t_from_summary(double mean1, double sd1, size_t n1, double mean2, double sd2, size_t n2,
                                   mp_comparison* out);
MP_API mp_status mp_p_from_t(double t, double df, double* out);

/* ---- Run directories ---------------------------------------------------- */

typedef struct mp_run mp_run;

MP_API mp_status mp_run_open(const char* run_dir, mp_run** out);
MP_API void mp_run_close(mp_run* run);

/* Runs one stage ("lexicon", "plan", "run", "embed", "purity", "facesim",
   "stats", "report") with a JSON options object. On success *summary_json
   holds a one-line JSON summary. */
MP_API mp_status mp_run_stage(mp_run* run, const char* stage, const char* options_json, char** summary_json);

/* Asks a running "run" or "embed" stage to stop after in-flight jobs.
   Safe to call from any thread. */
MP_API void mp_run_cancel(mp_run* run);

#ifdef __cplusplus
}
#endif

#endif /* MORPHPROBE_MORPHPROBE_H_ */
