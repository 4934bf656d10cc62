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

#include "morphprobe/morphprobe.h"

#include <atomic>
#include <cstring>
#include <new>
#include <string>

#include "errors.hpp"
#include "lexicon.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "planner.hpp"
#include "stats.hpp"

struct mp_lexicon {
  morphprobe::lexicon::Lexicon value;
};

struct mp_plan {
  morphprobe::planner::ExperimentPlan value;
};

struct mp_run {
  morphprobe::fs::path dir;
  std::atomic<bool> cancel{false};
};

namespace {

using morphprobe::Error;
using morphprobe::ErrorCode;

thread_local std::string g_last_error;

mp_status set_error(mp_status status, const char* what) {
  g_last_error = what ? what : "";
  return status;
}

// Runs fn, translating exceptions into status codes. Nothing escapes.
template <typename Fn>
mp_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    g_last_error.clear();
    return MP_OK;
  } catch (const Error& e) {
    return set_error(static_cast<mp_status>(static_cast<int>(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(MP_ERR_CONFIGURATION, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(MP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(MP_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(MP_ERR_INTERNAL, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

nlohmann::json parse_options(const char* options_json) {
  if (!options_json || !*options_json) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(options_json);
  } catch (const nlohmann::json::exception& e) {
    morphprobe::fail(ErrorCode::kConfiguration, std::string("options are not valid JSON: ") + e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) morphprobe::fail(ErrorCode::kInvalidArgument, what);
}

void fill(mp_comparison* out, const morphprobe::stats::GroupComparison& c) {
  out->t = c.t;
  out->df = c.df;
  out->p = c.p;
  out->d = c.d;
}

}  // namespace

extern "C" {

const char* mp_version(void) { return "1.0.0"; }

const char* mp_status_name(mp_status status) {
  if (status == MP_OK) return "ok";
  if (status == MP_ERR_INTERNAL) return "internal";
  if (status >= MP_ERR_INVALID_ARGUMENT && status <= MP_ERR_CANCELLED)
    return morphprobe::error_code_name(static_cast<ErrorCode>(status));
  return "unknown";
}

const char* mp_last_error(void) { return g_last_error.c_str(); }

void mp_string_free(char* s) { std::free(s); }

mp_status mp_lexicon_generate(const char* options_json, mp_lexicon** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    const auto options = parse_options(options_json);
    const auto config = morphprobe::pipeline::lexicon_config_from_json(options);
    const std::string path = options.value("wordlist", "");
    const auto words = path.empty() ? morphprobe::lexicon::Wordlist::bundled()
                                    : morphprobe::lexicon::Wordlist::load(path);
    *out = new mp_lexicon{morphprobe::lexicon::build_lexicon(config, words)};
  });
}

mp_status mp_lexicon_parse(const char* lexicon_json, mp_lexicon** out) {
  return guarded([&] {
    require(out != nullptr && lexicon_json != nullptr, "NULL argument");
    *out = new mp_lexicon{morphprobe::lexicon::parse_lexicon(lexicon_json)};
  });
}

void mp_lexicon_free(mp_lexicon* lexicon) { delete lexicon; }

size_t mp_lexicon_size(const mp_lexicon* lexicon) { return lexicon ? lexicon->value.candidates.size() : 0; }

mp_status mp_lexicon_count(const mp_lexicon* lexicon, const char* group, size_t* out) {
  return guarded([&] {
    require(lexicon && group && out, "NULL argument");
    *out = lexicon->value.count(morphprobe::lexicon::parse_group(group));
  });
}

mp_status mp_lexicon_serialize(const mp_lexicon* lexicon, char** out_json) {
  return guarded([&] {
    require(lexicon && out_json, "NULL argument");
    *out_json = dup_string(morphprobe::lexicon::serialize(lexicon->value));
  });
}

mp_status mp_is_real_word(const char* surface, int* out) {
  return guarded([&] {
    require(surface && out, "NULL argument");
    *out = morphprobe::lexicon::is_real_word(surface, morphprobe::lexicon::Wordlist::bundled()) ? 1 : 0;
  });
}

mp_status mp_decompose(const char* surface, char** out_json) {
  return guarded([&] {
    require(surface && out_json, "NULL argument");
    const auto d = morphprobe::lexicon::decompose(surface, morphprobe::lexicon::build_inventory());
    nlohmann::ordered_json j = nullptr;
    if (d) j = {{"onset", d->onset}, {"nucleus", d->nucleus}, {"suffix", d->suffix}};
    *out_json = dup_string(j.dump());
  });
}

mp_status mp_plan_build(const char* options_json, const mp_lexicon* lexicon, mp_plan** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    *out = new mp_plan{
        morphprobe::pipeline::plan_from_options(parse_options(options_json), lexicon ? &lexicon->value : nullptr)};
  });
}

void mp_plan_free(mp_plan* plan) { delete plan; }

size_t mp_plan_job_count(const mp_plan* plan) { return plan ? plan->value.jobs.size() : 0; }

mp_status mp_plan_serialize(const mp_plan* plan, char** out_json) {
  return guarded([&] {
    require(plan && out_json, "NULL argument");
    *out_json = dup_string(morphprobe::planner::serialize(plan->value));
  });
}

mp_status mp_plan_hash(const mp_plan* plan, char** out_hex) {
  return guarded([&] {
    require(plan && out_hex, "NULL argument");
    *out_hex = dup_string(morphprobe::planner::plan_hash(plan->value));
  });
}

mp_status mp_cosine_similarity(const float* a, const float* b, size_t d, double* out) {
  return guarded([&] {
    require(a && b && out, "NULL argument");
    *out = morphprobe::metrics::cosine_similarity({a, d}, {b, d});
  });
}

mp_status mp_nearest_neighbors(const float* values, uint32_t n, uint32_t d, const char* const* tags,
                               uint32_t* neighbors_out, uint8_t* hits_out) {
  return guarded([&] {
    require(values && neighbors_out && (tags || !hits_out), "NULL argument");
    morphprobe::EmbeddingMatrix m;
    m.n = n;
    m.d = d;
    m.values.assign(values, values + static_cast<std::size_t>(n) * d);
    const auto nn = morphprobe::metrics::nearest_neighbors(m);
    for (uint32_t i = 0; i < n; ++i) {
      neighbors_out[i] = static_cast<uint32_t>(nn[i]);
      if (hits_out) hits_out[i] = std::strcmp(tags[i], tags[nn[i]]) == 0 ? 1 : 0;
    }
  });
}

mp_status mp_pooled_t(const double* g1, size_t n1, const double* g2, size_t n2, mp_comparison* out) {
  return guarded([&] {
    require(g1 && g2 && out, "NULL argument");
    fill(out, morphprobe::stats::pooled_t({g1, n1}, {g2, n2}));
  });
}

mp_status mp_t_from_summary(double mean1, double sd1, size_t n1, double mean2, double sd2, size_t n2,
                            mp_comparison* out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    fill(out, morphprobe::stats::t_from_summary(mean1, sd1, n1, mean2, sd2, n2));
  });
}

mp_status mp_p_from_t(double t, double df, double* out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    *out = morphprobe::stats::p_from_t(t, df);
  });
}

mp_status mp_run_open(const char* run_dir, mp_run** out) {
  return guarded([&] {
    require(run_dir && *run_dir && out, "run directory must be a non-empty path");
    auto* run = new mp_run;
    run->dir = run_dir;
    *out = run;
  });
}

void mp_run_close(mp_run* run) { delete run; }

mp_status mp_run_stage(mp_run* run, const char* stage, const char* options_json, char** summary_json) {
  return guarded([&] {
    require(run && stage && summary_json, "NULL argument");
    run->cancel.store(false);
    const auto summary = morphprobe::pipeline::run_stage(run->dir, stage, parse_options(options_json), &run->cancel);
    *summary_json = dup_string(summary.dump());
  });
}

void mp_run_cancel(mp_run* run) {
  if (run) run->cancel.store(true);
}

}  // extern "C"
