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

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

#include "backend.hpp"
#include "png.hpp"
#include "runner.hpp"
#include "support.hpp"

using namespace morphprobe;
using namespace morphprobe::backend;
using mptest::code;
using mptest::error_code_of;
using nlohmann::json;

namespace {

std::string fixture(const std::string& name) {
  std::string s = read_file(fs::path(MP_FIXTURE_DIR) / "protocol" / name);
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double norm(const std::vector<float>& a) {
  double s = 0;
  for (float x : a) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

runner::RunOptions fast_retries(std::size_t in_flight = 1) {
  runner::RunOptions o;
  o.max_in_flight = in_flight;
  o.retry.backoff = {std::chrono::milliseconds(1), std::chrono::milliseconds(2), std::chrono::milliseconds(3)};
  return o;
}

const std::string kTinyPng = png::encode_gray8(1, 1, std::string(1, '\0'));

// An in-process server speaking the wire protocol. Handlers are swappable
// per test; counters observe what the client did.
class FakeServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  FakeServer() {
    server_.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      enter();
      {
        std::lock_guard lock(mutex_);
        generate_bodies.push_back(req.body);
      }
      generate_handler(req, res);
      leave();
    });
    server_.Post("/api/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++prefixed_calls;
      generate_handler(req, res);
    });
    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      enter();
      {
        std::lock_guard lock(mutex_);
        embed_requests.push_back(req.get_file_value("request").content);
        embed_images.push_back(req.get_file_value("image").content);
      }
      embed_handler(req, res);
      leave();
    });
    port = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

  HttpBackend client(std::string expected_id = {}) const {
    return HttpBackend({url(), EndpointKind::kGeneration, 5.0, 4}, {url(), EndpointKind::kImageEmbedding, 5.0, 4},
                       std::move(expected_id));
  }

  Handler generate_handler = [](const httplib::Request&, httplib::Response& res) {
    res.set_header("X-Backend-Id", "fake-1");
    res.set_content(kTinyPng, "image/png");
  };
  Handler embed_handler = [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vector":[3,4],"model_id":"fake-embed"})", "application/json");
  };

  int port = 0;
  std::atomic<int> calls{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};
  std::atomic<int> prefixed_calls{0};
  std::mutex mutex_;
  std::vector<std::string> generate_bodies;
  std::vector<std::string> embed_requests;
  std::vector<std::string> embed_images;
  int hold_ms = 0;

 private:
  void enter() {
    ++calls;
    const int now = ++in_flight;
    int seen = max_in_flight.load();
    while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
    }
    if (hold_ms) std::this_thread::sleep_for(std::chrono::milliseconds(hold_ms));
  }
  void leave() { --in_flight; }

  httplib::Server server_;
  std::thread thread_;
};

}  // namespace

TEST_CASE("golden request fixtures") {
  const auto hunt = planner::plan_crungus_hunt(
      [] {
        lexicon::Lexicon l;
        l.candidates.push_back({"snudgeoid", lexicon::Group::kPhonestheme, std::nullopt, 42});
        return l;
      }(),
      {1000, 1000});
  CHECK(generate_request(hunt.jobs[0]).dump() == fixture("generate_request_hunt.json"));

  const auto sweep = planner::plan_cfg_sweep({7}, {1});
  CHECK(generate_request(sweep.jobs[0]).dump() == fixture("generate_request_adapter.json"));

  CHECK(embed_request(Modality::kImageClip).dump() == fixture("embed_request_image_clip.json"));
  CHECK(embed_request(Modality::kFace).dump() == fixture("embed_request_face.json"));
}

TEST_CASE("golden response fixtures") {
  const auto clip = parse_embed_response(fixture("embed_response_ok_image_clip.json"), Modality::kImageClip);
  REQUIRE(clip.vector.has_value());
  CHECK(clip.vector->size() == 4);
  CHECK((*clip.vector)[2] == doctest::Approx(-0.8));
  CHECK(clip.model_id == "clip-vit-l-14");
  CHECK_FALSE(clip.face_detected.has_value());

  const auto face = parse_embed_response(fixture("embed_response_ok_face_detected.json"), Modality::kFace);
  CHECK(face.face_detected == true);
  CHECK(face.vector->size() == 3);

  for (const char* f : {"embed_response_ok_face_none.json", "embed_response_ok_face_null_vector.json"}) {
    const auto none = parse_embed_response(fixture(f), Modality::kFace);
    CHECK(none.face_detected == false);
    CHECK_FALSE(none.vector.has_value());
  }

  std::size_t bad = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(MP_FIXTURE_DIR) / "protocol")) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with("embed_response_bad_")) continue;
    ++bad;
    const std::string body = fixture(name);
    CAPTURE(name);
    CHECK(error_code_of([&] { parse_embed_response(body, Modality::kFace); }) == code(ErrorCode::kProtocol));
    if (!name.starts_with("embed_response_bad_face_"))
      CHECK(error_code_of([&] { parse_embed_response(body, Modality::kImageClip); }) == code(ErrorCode::kProtocol));
  }
  CHECK(bad >= 10);
}

TEST_CASE("http client against an in-process server") {
  FakeServer server;
  const auto plan = planner::plan_cfg_sweep({7}, {1, 2, 3});

  SUBCASE("generate sends the pinned body and returns the backend id") {
    auto cli = server.client();
    const auto res = cli.generate(plan.jobs[0]);
    CHECK(res.backend_id == "fake-1");
    CHECK(res.png == kTinyPng);
    REQUIRE(server.generate_bodies.size() == 1);
    CHECK(server.generate_bodies[0] == generate_request(plan.jobs[0]).dump());
  }

  SUBCASE("base URL prefix") {
    HttpBackend cli({server.url() + "/api/", EndpointKind::kGeneration, 5.0, 1}, {server.url(), EndpointKind::kImageEmbedding, 5.0, 1});
    cli.generate(plan.jobs[0]);
    CHECK(server.prefixed_calls == 1);
  }

  SUBCASE("embed sends a multipart request") {
    auto cli = server.client();
    const auto res = cli.embed(kTinyPng, Modality::kImageClip);
    REQUIRE(res.vector.has_value());
    CHECK(res.model_id == "fake-embed");
    REQUIRE(server.embed_requests.size() == 1);
    CHECK(json::parse(server.embed_requests[0]) == json::parse(fixture("embed_request_image_clip.json")));
    CHECK(server.embed_images[0] == kTinyPng);
  }

  SUBCASE("protocol violations are fatal") {
    auto cli = server.client();
    server.generate_handler = [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kTinyPng, "image/png");  // no X-Backend-Id
    };
    CHECK(error_code_of([&] { cli.generate(plan.jobs[0]); }) == code(ErrorCode::kProtocol));
    server.generate_handler = [](const httplib::Request&, httplib::Response& res) {
      res.set_header("X-Backend-Id", "fake-1");
      res.set_content("GIF89a", "image/gif");
    };
    CHECK(error_code_of([&] { cli.generate(plan.jobs[0]); }) == code(ErrorCode::kProtocol));
    server.generate_handler = [](const httplib::Request&, httplib::Response& res) { res.status = 302; };
    CHECK(error_code_of([&] { cli.generate(plan.jobs[0]); }) == code(ErrorCode::kProtocol));

    // The runner stops on a protocol error instead of recording a job failure.
    mptest::TempDir dir;
    auto st = store::RunStore::open(dir.path(), plan);
    CHECK(error_code_of([&] { runner::run_plan(plan, cli, *st, fast_retries()); }) == code(ErrorCode::kProtocol));
    CHECK(st->manifest().failures.empty());
  }

  SUBCASE("5xx is retried, then succeeds") {
    std::atomic<int> n{0};
    server.generate_handler = [&](const httplib::Request&, httplib::Response& res) {
      if (++n <= 2) {
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      res.set_header("X-Backend-Id", "fake-1");
      res.set_content(kTinyPng, "image/png");
    };
    auto cli = server.client();
    mptest::TempDir dir;
    const auto one = planner::plan_cfg_sweep({7}, {1});
    auto st = store::RunStore::open(dir.path(), one);
    const auto report = runner::run_plan(one, cli, *st, fast_retries());
    CHECK(report.generated == 1);
    CHECK(report.failures.empty());
    CHECK(server.calls == 3);
  }

  SUBCASE("persistent 5xx exhausts the retry budget") {
    server.generate_handler = [](const httplib::Request&, httplib::Response& res) { res.status = 500; };
    auto cli = server.client();
    mptest::TempDir dir;
    const auto one = planner::plan_cfg_sweep({7}, {1});
    auto st = store::RunStore::open(dir.path(), one);
    const auto report = runner::run_plan(one, cli, *st, fast_retries());
    REQUIRE(report.failures.size() == 1);
    CHECK(report.failures[0].attempts == 4);
    CHECK(server.calls == 4);
    CHECK(st->status(one.jobs[0].job_id) == store::JobStatus::kFailed);

    // A later run retries the failed job.
    server.generate_handler = [](const httplib::Request&, httplib::Response& res) {
      res.set_header("X-Backend-Id", "fake-1");
      res.set_content(kTinyPng, "image/png");
    };
    const auto again = runner::run_plan(one, cli, *st, fast_retries());
    CHECK(again.generated == 1);
    CHECK(again.failures.empty());
  }

  SUBCASE("4xx fails the job without retries") {
    server.generate_handler = [](const httplib::Request&, httplib::Response& res) {
      res.status = 404;
      res.set_content("unknown adapter", "text/plain");
    };
    auto cli = server.client();
    mptest::TempDir dir;
    auto st = store::RunStore::open(dir.path(), plan);
    const auto report = runner::run_plan(plan, cli, *st, fast_retries(2));
    CHECK(report.failures.size() == 3);
    CHECK(report.records.empty());
    for (const auto& f : report.failures) {
      CHECK(f.attempts == 1);
      CHECK(f.error.find("404") != std::string::npos);
    }
    CHECK(server.calls == 3);
  }

  SUBCASE("bounded in-flight requests") {
    server.hold_ms = 25;
    auto cli = server.client();
    const auto big = planner::plan_cfg_sweep({5, 7, 8, 9}, {1, 2, 3, 4, 5});
    mptest::TempDir dir;
    auto st = store::RunStore::open(dir.path(), big);
    const auto report = runner::run_plan(big, cli, *st, fast_retries(3));
    CHECK(report.generated == 20);
    CHECK(server.max_in_flight <= 3);
    CHECK(server.max_in_flight >= 2);

    std::vector<store::ImageRecord> recs = report.records;
    server.max_in_flight = 0;
    const auto emb = runner::embed_images(recs, Modality::kImageClip, cli, *st, fast_retries(2));
    CHECK(emb.size() == 20);
    CHECK(server.max_in_flight <= 2);
    for (const auto& e : emb) CHECK(norm(*e.vector) == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("cached jobs need a matching backend id") {
    auto cli = server.client("fake-1");
    mptest::TempDir dir;
    auto st = store::RunStore::open(dir.path(), plan);
    for (const auto& j : plan.jobs) st->put_image(j.job_id, kTinyPng, "other-backend");
    const auto report = runner::run_plan(plan, cli, *st, fast_retries());
    CHECK(report.generated == 3);
    CHECK(report.cached == 0);
    const auto again = runner::run_plan(plan, cli, *st, fast_retries());
    CHECK(again.generated == 0);
    CHECK(again.cached == 3);
  }

  SUBCASE("face embeddings: seven of ten detected") {
    std::atomic<int> n{0};
    server.embed_handler = [&](const httplib::Request&, httplib::Response& res) {
      if (++n <= 7)
        res.set_content(R"({"vector":[0.5,0.5],"face_detected":true,"model_id":"face"})", "application/json");
      else
        res.set_content(R"({"face_detected":false,"model_id":"face"})", "application/json");
    };
    auto cli = server.client();
    const auto arm_b = planner::plan_push_pull(planner::Arm::kB);
    mptest::TempDir dir;
    auto st = store::RunStore::open(dir.path(), arm_b);
    const auto report = runner::run_plan(arm_b, cli, *st, fast_retries());
    const auto emb = runner::embed_images(report.records, Modality::kFace, cli, *st, fast_retries());
    REQUIRE(emb.size() == 10);
    const auto detected = std::count_if(emb.begin(), emb.end(), [](const auto& e) { return e.face_detected; });
    CHECK(detected == 7);
    for (const auto& e : emb) CHECK(e.vector.has_value() == e.face_detected);
  }

  SUBCASE("embedding dimension must stay fixed") {
    std::atomic<int> n{0};
    server.embed_handler = [&](const httplib::Request&, httplib::Response& res) {
      res.set_content(++n == 1 ? R"({"vector":[1,0],"model_id":"m"})" : R"({"vector":[1,0,0],"model_id":"m"})",
                      "application/json");
    };
    auto cli = server.client();
    mptest::TempDir dir;
    auto st = store::RunStore::open(dir.path(), plan);
    const auto report = runner::run_plan(plan, cli, *st, fast_retries());
    CHECK(error_code_of([&] { runner::embed_images(report.records, Modality::kImageClip, cli, *st, fast_retries()); }) ==
          code(ErrorCode::kProtocol));
  }
}

TEST_CASE("transport errors are retryable job failures") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  const std::string url = "http://127.0.0.1:" + std::to_string(port);
  HttpBackend cli({url, EndpointKind::kGeneration, 1.0, 1}, {url, EndpointKind::kImageEmbedding, 1.0, 1});
  const auto plan = planner::plan_cfg_sweep({7}, {1});
  try {
    cli.generate(plan.jobs[0]);
    FAIL("expected a transport error");
  } catch (const BackendError& e) {
    CHECK(e.retryable());
    CHECK(e.http_status() == 0);
  }
  mptest::TempDir dir;
  auto st = store::RunStore::open(dir.path(), plan);
  const auto report = runner::run_plan(plan, cli, *st, fast_retries());
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].attempts == 4);

  CHECK(error_code_of([] {
          HttpBackend bad({"ftp://x", EndpointKind::kGeneration, 1.0, 1}, {"ftp://x", EndpointKind::kImageEmbedding, 1.0, 1});
          bad.generate(planner::plan_cfg_sweep({7}, {1}).jobs[0]);
        }) == code(ErrorCode::kConfiguration));
}

TEST_CASE("stub generation") {
  ConceptMap map = ConceptMap::from_json(json::parse(R"({"concepts":{"arm_A":{"cluster_id":3,"noise_sigma":0.0}}})"));
  const auto plan = planner::plan_push_pull(planner::Arm::kA, {1, 2});
  const auto a1 = stub_generate(plan.jobs[0], map, 5);
  CHECK(a1 == stub_generate(plan.jobs[0], map, 5));
  CHECK(a1 != stub_generate(plan.jobs[1], map, 5));
  CHECK(a1 != stub_generate(plan.jobs[0], map, 6));
  CHECK(png::has_signature(a1));

  const auto p = decode_stub_image(a1);
  CHECK(p.cluster_id == 3);
  CHECK(p.noise_sigma == 0.0);

  const auto other = planner::plan_push_pull(planner::Arm::kB, {1, 1});
  const auto d = decode_stub_image(stub_generate(other.jobs[0], map, 5));
  CHECK(d.cluster_id == 0);
  CHECK(d.noise_sigma == 1.0);

  CHECK(error_code_of([] { decode_stub_image("not a png"); }) == code(ErrorCode::kProtocol));
  CHECK(error_code_of([] { decode_stub_image(png::encode_gray8(8, 5, std::string(40, 'x'))); }) ==
        code(ErrorCode::kProtocol));
  CHECK(error_code_of([] { ConceptMap::from_json(json::parse(R"({"default":{"cluster_id":1,"noise_sigma":-1}})")); }) ==
        code(ErrorCode::kConfiguration));
  CHECK(error_code_of([] { ConceptMap::from_json(json::parse(R"({"concepts":{"x":{"noise_sigma":1}}})")); }) ==
        code(ErrorCode::kConfiguration));
  CHECK(ConceptMap::from_json(map.to_json()).to_json() == map.to_json());
}

TEST_CASE("stub embedding") {
  ConceptMap map = ConceptMap::from_json(json::parse(
      R"({"concepts":{"arm_A":{"cluster_id":3,"noise_sigma":0.0},"arm_B":{"cluster_id":4,"noise_sigma":0.0},
          "arm_C":{"cluster_id":3,"noise_sigma":0.5,"face_rate":0.0}}})"));
  const auto a = planner::plan_push_pull(planner::Arm::kA, {1, 2});
  const auto b = planner::plan_push_pull(planner::Arm::kB, {1, 1});
  const auto c = planner::plan_push_pull(planner::Arm::kC, {1, 1});

  const auto ea1 = stub_embed(stub_generate(a.jobs[0], map, 1), Modality::kImageClip, 1);
  const auto ea2 = stub_embed(stub_generate(a.jobs[1], map, 1), Modality::kImageClip, 1);
  const auto eb = stub_embed(stub_generate(b.jobs[0], map, 1), Modality::kImageClip, 1);
  REQUIRE(ea1.vector->size() == 768);
  CHECK(norm(*ea1.vector) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(cosine(*ea1.vector, *ea2.vector) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(cosine(*ea1.vector, *eb.vector)) < 0.2);

  const auto face = stub_embed(stub_generate(a.jobs[0], map, 1), Modality::kFace, 1);
  CHECK(face.face_detected);
  CHECK(face.vector->size() == 512);
  const auto no_face = stub_embed(stub_generate(c.jobs[0], map, 1), Modality::kFace, 1);
  CHECK_FALSE(no_face.face_detected);
  CHECK_FALSE(no_face.vector.has_value());

  // Same inputs, same bits.
  const auto again = stub_embed(stub_generate(a.jobs[0], map, 1), Modality::kImageClip, 1);
  CHECK(*again.vector == *ea1.vector);
}

TEST_CASE("stub basis is nearly orthogonal") {
  // Measured, not assumed: max |cos| over every pair of the first 64
  // clusters at d = 768 and the first 16 at d = 512.
  double worst768 = 0.0, worst512 = 0.0;
  std::vector<std::vector<float>> b768, b512;
  for (int c = 0; c < 64; ++c) b768.push_back(stub_basis(c, 768));
  for (int c = 0; c < 16; ++c) b512.push_back(stub_basis(c, 512));
  for (std::size_t i = 0; i < b768.size(); ++i)
    for (std::size_t j = i + 1; j < b768.size(); ++j) worst768 = std::max(worst768, std::abs(cosine(b768[i], b768[j])));
  for (std::size_t i = 0; i < b512.size(); ++i)
    for (std::size_t j = i + 1; j < b512.size(); ++j) worst512 = std::max(worst512, std::abs(cosine(b512[i], b512[j])));
  MESSAGE("max |cos| between stub basis vectors: d=768 " << worst768 << ", d=512 " << worst512);
  CHECK(worst768 < 0.2);
  CHECK(worst512 < 0.2);
  for (const auto& v : b768) CHECK(norm(v) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("runner with the stub backend") {
  StubBackend stub(ConceptMap{}, 3);
  const auto plan = planner::plan_cfg_sweep({5, 7, 8, 9, 11}, {1, 2, 3});
  mptest::TempDir dir;
  auto st = store::RunStore::open(dir.path(), plan);

  const auto first = runner::run_plan(plan, stub, *st, fast_retries(4));
  CHECK(first.records.size() == 15);
  CHECK(first.generated == 15);
  CHECK(stub.generate_calls() == 15);

  const auto second = runner::run_plan(plan, stub, *st, fast_retries(4));
  CHECK(second.records.size() == 15);
  CHECK(second.generated == 0);
  CHECK(second.cached == 15);
  CHECK(stub.generate_calls() == 15);
  for (std::size_t i = 0; i < 15; ++i) CHECK(second.records[i].content_hash == first.records[i].content_hash);

  CHECK(runner::embed_images({}, Modality::kImageClip, stub, *st).empty());
  const auto emb = runner::embed_images(first.records, Modality::kImageClip, stub, *st, fast_retries(3));
  CHECK(emb.size() == 15);
  for (std::size_t i = 0; i < emb.size(); ++i) {
    CHECK(emb[i].job_id == first.records[i].job_id);
    CHECK(norm(*emb[i].vector) == doctest::Approx(1.0).epsilon(1e-6));
  }

  CHECK(error_code_of([&] { runner::run_plan(planner::plan_cfg_sweep({5}, {1}), stub, *st); }) ==
        code(ErrorCode::kPlanMismatch));
  runner::RunOptions zero;
  zero.max_in_flight = 0;
  CHECK(error_code_of([&] { runner::run_plan(plan, stub, *st, zero); }) == code(ErrorCode::kInvalidArgument));
}

TEST_CASE("cancellation leaves remaining jobs pending") {
  StubBackend stub(ConceptMap{}, 3);
  const auto plan = planner::plan_cfg_sweep({5, 7, 8, 9, 11}, {1, 2, 3});
  mptest::TempDir dir;
  auto st = store::RunStore::open(dir.path(), plan);
  runner::RunOptions opts;
  std::size_t started = 0;
  opts.should_stop = [&] { return ++started > 4; };
  const auto report = runner::run_plan(plan, stub, *st, opts);
  CHECK(report.cancelled);
  CHECK(report.generated == 4);
  CHECK(st->manifest().count(store::JobStatus::kPending) == 11);
  const auto rest = runner::run_plan(plan, stub, *st);
  CHECK(rest.generated == 11);
  CHECK(stub.generate_calls() == 15);
}
