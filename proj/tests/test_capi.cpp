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

#include <doctest.h>

#include <morphprobe/morphprobe.h>

#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  mp_string_free(s);
  return out;
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "mp-capi-XXXXXX").string();
    REQUIRE(::mkdtemp(tmpl.data()) != nullptr);
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI through the shell; stderr is discarded, stdout captured.
CliResult cli(const std::string& args, const std::string& env = "env -u MORPHPROBE_BACKEND_URL") {
  const std::string cmd = env + " '" + std::string(MP_CLI_PATH) + "' " + args + " 2>/dev/null";
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json last_line(const std::string& out) {
  std::string s = out;
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return json::parse(s.substr(s.rfind('\n') == std::string::npos ? 0 : s.rfind('\n') + 1));
}

std::map<std::string, std::string> reports_of(const fs::path& run) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(run / "reports")) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("status names and last error") {
  CHECK(std::string(mp_version()).size() > 0);
  CHECK(std::string(mp_status_name(MP_OK)) == "ok");
  CHECK(std::string(mp_status_name(MP_ERR_MISSING_ARTIFACT)) == "missing_artifact");
  CHECK(std::string(mp_status_name(MP_ERR_INTERNAL)) == "internal");
  CHECK(std::string(mp_status_name(static_cast<mp_status>(55))) == "unknown");

  double out = 0;
  const float a[2] = {1, 0}, z[2] = {0, 0};
  CHECK(mp_cosine_similarity(a, z, 2, &out) == MP_ERR_DOMAIN);
  CHECK(std::string(mp_last_error()).find("zero") != std::string::npos);
  CHECK(mp_cosine_similarity(a, a, 2, &out) == MP_OK);
  CHECK(std::string(mp_last_error()).empty());
  CHECK(out == doctest::Approx(1.0));
  CHECK(mp_cosine_similarity(nullptr, a, 2, &out) == MP_ERR_INVALID_ARGUMENT);
  mp_string_free(nullptr);
}

TEST_CASE("lexicon and plan handles") {
  mp_lexicon* lex = nullptr;
  REQUIRE(mp_lexicon_generate(nullptr, &lex) == MP_OK);
  CHECK(mp_lexicon_size(lex) == 354);
  std::size_t n = 0;
  CHECK(mp_lexicon_count(lex, "phonestheme", &n) == MP_OK);
  CHECK(n == 200);
  CHECK(mp_lexicon_count(lex, "negative_control", &n) == MP_OK);
  CHECK(n == 50);
  CHECK(mp_lexicon_count(lex, "nope", &n) == MP_ERR_INVALID_ARGUMENT);

  char* text = nullptr;
  REQUIRE(mp_lexicon_serialize(lex, &text) == MP_OK);
  const std::string serialized = take(text);
  mp_lexicon* back = nullptr;
  REQUIRE(mp_lexicon_parse(serialized.c_str(), &back) == MP_OK);
  CHECK(mp_lexicon_size(back) == 354);
  mp_lexicon_free(back);
  CHECK(mp_lexicon_parse("{", &back) != MP_OK);
  CHECK(mp_lexicon_generate("not json", &back) == MP_ERR_CONFIGURATION);

  mp_plan* plan = nullptr;
  REQUIRE(mp_plan_build(R"({"kind":"crungus-hunt"})", lex, &plan) == MP_OK);
  CHECK(mp_plan_job_count(plan) == 5664);
  char* hash = nullptr;
  REQUIRE(mp_plan_hash(plan, &hash) == MP_OK);
  CHECK(take(hash).size() == 64);
  mp_plan_free(plan);

  CHECK(mp_plan_build(R"({"kind":"crungus-hunt"})", nullptr, &plan) == MP_ERR_MISSING_ARTIFACT);
  for (const auto& [opts, jobs] : std::vector<std::pair<const char*, std::size_t>>{
           {R"({"kind":"push-pull","arms":["A"]})", 10},
           {R"({"kind":"push-pull"})", 30},
           {R"({"kind":"cfg-sweep"})", 15},
           {R"({"kind":"adapter-sweep"})", 15}}) {
    REQUIRE(mp_plan_build(opts, nullptr, &plan) == MP_OK);
    CHECK(mp_plan_job_count(plan) == jobs);
    char* s = nullptr;
    CHECK(mp_plan_serialize(plan, &s) == MP_OK);
    CHECK(json::parse(take(s)).contains("jobs"));
    mp_plan_free(plan);
  }
  mp_lexicon_free(lex);

  int real = -1;
  CHECK(mp_is_real_word("Mushroom", &real) == MP_OK);
  CHECK(real == 1);
  CHECK(mp_is_real_word("snudgeoid", &real) == MP_OK);
  CHECK(real == 0);
  char* d = nullptr;
  REQUIRE(mp_decompose("snudgeoid", &d) == MP_OK);
  CHECK(json::parse(take(d)) == json{{"onset", "sn"}, {"nucleus", "udge"}, {"suffix", "oid"}});
  REQUIRE(mp_decompose("table", &d) == MP_OK);
  CHECK(take(d) == "null");
}

TEST_CASE("metrics and statistics through the C API") {
  const float values[] = {1, 0.01f, 1, -0.01f, 0.01f, 1, -0.01f, 1};
  const char* tags[] = {"a", "a", "b", "a"};
  std::uint32_t nn[4];
  std::uint8_t hits[4];
  REQUIRE(mp_nearest_neighbors(values, 4, 2, tags, nn, hits) == MP_OK);
  CHECK(nn[0] == 1);
  CHECK(nn[2] == 3);
  CHECK(hits[0] == 1);
  CHECK(hits[2] == 0);
  CHECK(mp_nearest_neighbors(values, 1, 2, tags, nn, nullptr) == MP_ERR_DOMAIN);

  const double g1[] = {1, 2, 3}, g2[] = {1, 2, 3, 4};
  mp_comparison c{};
  REQUIRE(mp_pooled_t(g1, 3, g2, 4, &c) == MP_OK);
  CHECK(c.df == 5);
  CHECK(c.t == doctest::Approx(-0.5528).epsilon(1e-3));
  const double same[] = {1, 1}, other[] = {2, 2};
  CHECK(mp_pooled_t(same, 2, other, 2, &c) == MP_ERR_DEGENERATE_VARIANCE);
  REQUIRE(mp_t_from_summary(0.3709, 0.2997, 200, 0.2087, 0.2837, 100, &c) == MP_OK);
  CHECK(std::fabs(c.t - 4.497) < 0.1);
  double p = 0;
  REQUIRE(mp_p_from_t(1, 1, &p) == MP_OK);
  CHECK(p == doctest::Approx(0.5));
}

TEST_CASE("run directories through the C API") {
  TempDir dir;
  mp_run* run = nullptr;
  REQUIRE(mp_run_open((dir.path() / "r").c_str(), &run) == MP_OK);
  char* summary = nullptr;
  CHECK(mp_run_stage(run, "purity", "{}", &summary) == MP_ERR_MISSING_ARTIFACT);
  CHECK(std::string(mp_last_error()).find("plan.json") != std::string::npos);
  REQUIRE(mp_run_stage(run, "plan", R"({"kind":"cfg-sweep","seeds":[1]})", &summary) == MP_OK);
  CHECK(last_line(take(summary))["jobs"] == 5);
  REQUIRE(mp_run_stage(run, "run", nullptr, &summary) == MP_OK);
  CHECK(last_line(take(summary))["generated"] == 5);
  CHECK(mp_run_stage(run, "warp", "{}", &summary) == MP_ERR_INVALID_ARGUMENT);
  CHECK(mp_run_stage(run, "run", "[1]", &summary) == MP_ERR_CONFIGURATION);
  mp_run_cancel(run);
  mp_run_close(run);
  CHECK(mp_run_open("", &run) == MP_ERR_INVALID_ARGUMENT);
}

TEST_CASE("command line exit codes and output") {
  TempDir dir;
  const std::string d = "-d '" + (dir.path() / "run").string() + "' ";

  SUBCASE("usage errors exit 1") {
    CHECK(cli("").exit_code == 1);
    CHECK(cli(d + "frobnicate").exit_code == 1);
    CHECK(cli(d + "plan cfg-sweep --seeds 1").exit_code == 0);
    const auto r = cli(d + "run");  // no backend chosen
    CHECK(r.exit_code == 1);
    CHECK(last_line(r.out)["error"] == "usage");
    CHECK(cli(d + "run --stub --backend-url http://127.0.0.1:1").exit_code == 1);
  }
  SUBCASE("missing artifacts exit 2") {
    const auto r = cli(d + "purity");
    CHECK(r.exit_code == 2);
    CHECK(last_line(r.out)["error"] == "missing_artifact");
    CHECK(cli(d + "plan crungus-hunt").exit_code == 2);
  }
  SUBCASE("backend failures exit 3") {
    REQUIRE(cli(d + "plan cfg-sweep --seeds 1 --cfg-values 7").exit_code == 0);
    const auto r = cli(d + "run --backend-url http://127.0.0.1:1 --retry-backoff-ms 1,1,1 --timeout 2");
    CHECK(r.exit_code == 3);
    // The environment variable selects the live backend when no flag does.
    const auto e = cli(d + "run --retry-backoff-ms 1", "MORPHPROBE_BACKEND_URL=http://127.0.0.1:1");
    CHECK(e.exit_code == 3);
    const json cfg = json::parse(slurp(dir.path() / "run" / "config.json"));
    CHECK(cfg["run"]["generation_url"] == "http://127.0.0.1:1");
  }
  SUBCASE("integrity failures exit 4") {
    REQUIRE(cli(d + "plan cfg-sweep --seeds 1").exit_code == 0);
    REQUIRE(cli(d + "run --stub").exit_code == 0);
    REQUIRE(cli(d + "embed --stub").exit_code == 0);
    const fs::path embx = dir.path() / "run" / "embeddings" / "image_clip.embx";
    fs::resize_file(embx, fs::file_size(embx) - 1);
    const auto r = cli(d + "purity");
    CHECK(r.exit_code == 4);
    CHECK(last_line(r.out)["error"] == "integrity");
  }
  SUBCASE("flag beats environment") {
    REQUIRE(cli(d + "plan cfg-sweep --seeds 1").exit_code == 0);
    CHECK(cli(d + "run --stub", "MORPHPROBE_BACKEND_URL=http://127.0.0.1:1").exit_code == 0);
  }
}

TEST_CASE("command line chain is idempotent") {
  TempDir dir;
  const fs::path run = dir.path() / "run";
  const std::string d = "-d '" + run.string() + "' ";
  const std::vector<std::string> steps = {
      "lexicon --phonestheme-count 8 --random-count 5 --negative-count 4 --pin snudgeoid",
      "plan crungus-hunt --seed-range 1,3",
      "run --stub",
      "embed --stub",
      "embed --stub --modality face",
      "purity",
      "facesim",
      "stats",
      "report",
  };
  std::vector<json> first;
  for (const auto& s : steps) {
    const auto r = cli(d + s);
    CAPTURE(s);
    REQUIRE(r.exit_code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
    first.push_back(last_line(r.out));
  }
  CHECK(first[2]["generated"] == 21 * 3);
  const auto reports = reports_of(run);
  CHECK(reports.count("summary.json"));
  CHECK(reports.count("similarity.csv"));
  CHECK(reports.count("perfect_purity.csv"));

  for (const auto& s : steps) REQUIRE(cli(d + s).exit_code == 0);
  CHECK(last_line(cli(d + "run --stub").out)["generated"] == 0);
  CHECK(reports_of(run) == reports);
}
