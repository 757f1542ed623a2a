#include <unistd.h>

#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "ecotune/backend.hpp"
#include "ecotune/mock_backend.hpp"
#include "ecotune/response_cache.hpp"
#include "ecotune/serialize.hpp"
#include "helpers.hpp"

using namespace ecotune;
namespace fs = std::filesystem;

TEST_CASE("render_prompt substitutes placeholders exactly") {
  CHECK(render_prompt("{prompt}", {{"prompt", "hi"}}) == "hi");
  CHECK(render_prompt("# Python 3{definition}", {{"definition", "\ndef f():"}}) ==
        "# Python 3\ndef f():");
  CHECK(render_prompt("{{x}}", {}) == "{x}");
  CHECK(render_prompt("a {x} b {x}", {{"x", "1"}}) == "a 1 b 1");
  CHECK(render_prompt(" {x} ", {{"x", "  y  "}}) == "   y   ");  // no trimming

  CHECK_THROWS_WITH_AS(render_prompt("{missing}", {{"prompt", "hi"}}),
                       doctest::Contains("{missing}"), std::invalid_argument);
  CHECK_THROWS_AS(render_prompt("{oops", {}), std::invalid_argument);
}

TEST_CASE("whitespace token counting") {
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("   ") == 0);
  CHECK(whitespace_token_count("one") == 1);
  CHECK(whitespace_token_count("a b\tc\nd") == 4);
  CHECK(whitespace_token_count("  padded   words  ") == 2);
}

namespace {

CompletionRequest basic_request(std::int64_t n = 1, std::int64_t offset = 0,
                                std::int64_t max_tokens = 200) {
  CompletionRequest r;
  r.model = "mock-model";
  r.rendered_prompt = "solve this problem";
  r.max_tokens = max_tokens;
  r.temperature = 0.5;
  r.n = n;
  r.response_offset = offset;
  return r;
}

}  // namespace

TEST_CASE("mock responses are deterministic") {
  Rng rng = make_rng(1, 1);
  const MockProfile profile = ecotune::test::random_profile(rng);
  MockBackend a(profile);
  MockBackend b(profile);
  const auto request = basic_request(4);
  CHECK(a.complete(request) == b.complete(request));
  CHECK(a.complete(request) == a.complete(request));
}

TEST_CASE("split batches return the same responses as one batch") {
  Rng rng = make_rng(2, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const MockProfile profile = ecotune::test::random_profile(rng);
    MockBackend backend(profile);
    const std::int64_t total = uniform_int(rng, 2, 12);
    const std::int64_t split = uniform_int(rng, 1, total - 1);
    const std::int64_t mt = uniform_int(rng, 1, 800);

    const ResponseSet whole = backend.complete(basic_request(total, 0, mt));
    const ResponseSet head = backend.complete(basic_request(split, 0, mt));
    const ResponseSet tail =
        backend.complete(basic_request(total - split, split, mt));

    REQUIRE(whole.texts.size() == static_cast<std::size_t>(total));
    std::vector<std::string> glued = head.texts;
    glued.insert(glued.end(), tail.texts.begin(), tail.texts.end());
    CHECK(whole.texts == glued);
    // Output usage splits additively; input is charged per request.
    CHECK(whole.usage.output_tokens ==
          head.usage.output_tokens + tail.usage.output_tokens);
    CHECK(whole.usage.input_tokens == head.usage.input_tokens);
  }
}

TEST_CASE("mock usage is non-decreasing in n and max_tokens") {
  Rng rng = make_rng(3, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const MockProfile profile = ecotune::test::random_profile(rng);
    MockBackend backend(profile);
    const std::int64_t n = uniform_int(rng, 1, 10);
    const std::int64_t mt = uniform_int(rng, 1, 500);

    const auto base = backend.complete(basic_request(n, 0, mt));
    const auto more_tokens = backend.complete(basic_request(n, 0, mt * 2));
    const auto more_responses = backend.complete(basic_request(n + 3, 0, mt));

    CHECK(more_tokens.usage.total() >= base.usage.total());
    CHECK(more_responses.usage.total() >= base.usage.total());
    CHECK(base.usage.total() ==
          base.usage.input_tokens + base.usage.output_tokens);
  }
}

TEST_CASE("stop sequences truncate text and shorten usage") {
  MockProfile profile;
  profile.seed = 12;
  MockBackend backend(profile);

  auto request = basic_request(8, 0, 400);
  const auto unstopped = backend.complete(request);

  // Pick a word that certainly occurs somewhere in the output stream.
  request.stop = {"the"};
  const auto stopped = backend.complete(request);
  CHECK(stopped.usage.output_tokens <= unstopped.usage.output_tokens);
  CHECK(stopped.usage.output_tokens < unstopped.usage.output_tokens);
  for (const auto& text : stopped.texts)
    CHECK(text.find("the") == std::string::npos);
}

TEST_CASE("best_of returns one winner but charges every candidate") {
  MockProfile profile;
  profile.seed = 9;
  MockBackend backend(profile);

  auto one = basic_request(1, 0, 300);
  one.logprobs_wanted = true;
  const auto single = backend.complete(one);

  auto filtered = basic_request(1, 0, 300);
  filtered.best_of = 6;
  filtered.logprobs_wanted = true;
  const auto best = backend.complete(filtered);

  REQUIRE(best.texts.size() == 1);
  REQUIRE(best.mean_logprobs.size() == 1);
  CHECK(best.usage.output_tokens > single.usage.output_tokens);

  // The winner is the argmax-logprob candidate of the window.
  auto all = basic_request(6, 0, 300);
  all.logprobs_wanted = true;
  const auto candidates = backend.complete(all);
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < candidates.mean_logprobs.size(); ++i)
    if (candidates.mean_logprobs[i] > candidates.mean_logprobs[argmax])
      argmax = i;
  CHECK(best.texts[0] == candidates.texts[argmax]);
  CHECK(best.usage.output_tokens == candidates.usage.output_tokens);

  // Window-split winners compose: max over split winners equals the
  // whole-window winner.
  auto head = basic_request(1, 0, 300);
  head.best_of = 3;
  head.logprobs_wanted = true;
  auto tail = basic_request(1, 3, 300);
  tail.best_of = 3;
  tail.logprobs_wanted = true;
  const auto h = backend.complete(head);
  const auto t = backend.complete(tail);
  const auto& split_winner =
      h.mean_logprobs[0] >= t.mean_logprobs[0] ? h.texts[0] : t.texts[0];
  CHECK(split_winner == best.texts[0]);
}

TEST_CASE("mock rejects malformed requests") {
  MockBackend backend(MockProfile{});
  auto bad_n = basic_request(0);
  CHECK_THROWS_AS(backend.complete(bad_n), std::invalid_argument);
  auto both = basic_request(2);
  both.best_of = 2;
  CHECK_THROWS_AS(backend.complete(both), std::invalid_argument);
  auto bad_mt = basic_request(1, 0, 0);
  CHECK_THROWS_AS(backend.complete(bad_mt), std::invalid_argument);
}

TEST_CASE("response cache round-trips and misses on any difference") {
  const fs::path dir =
      fs::temp_directory_path() / ("ecotune_cache_test_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  ResponseCache cache(dir.string());

  const auto request = basic_request(3);
  CHECK_FALSE(cache.lookup(request, "mock/x").has_value());  // cold miss

  MockBackend backend(MockProfile{});
  const ResponseSet response = backend.complete(request);
  cache.store(request, "mock/x", response);

  const auto hit = cache.lookup(request, "mock/x");
  REQUIRE(hit.has_value());
  CHECK(*hit == response);

  auto nudged = request;
  nudged.temperature = 0.50001;
  CHECK_FALSE(cache.lookup(nudged, "mock/x").has_value());

  auto offset = request;
  offset.response_offset = 1;
  CHECK_FALSE(cache.lookup(offset, "mock/x").has_value());

  CHECK_FALSE(cache.lookup(request, "mock/other").has_value());

  // Corrupt entries are evicted and treated as misses.
  const std::string key = ResponseCache::key(request, "mock/x");
  const fs::path entry = dir / (key + ".json");
  REQUIRE(fs::exists(entry));
  {
    std::ofstream out(entry, std::ios::trunc);
    out << "{not json";
  }
  CHECK_FALSE(cache.lookup(request, "mock/x").has_value());
  CHECK_FALSE(fs::exists(entry));

  // Cached backend serves stored responses without re-requesting.
  auto inner = std::make_unique<MockBackend>(MockProfile{});
  MockBackend* inner_ptr = inner.get();
  CachedBackend cached(std::move(inner), std::make_shared<ResponseCache>(dir.string()));
  const auto first = cached.complete(request);
  const auto before = inner_ptr->request_count();
  const auto second = cached.complete(request);
  CHECK(first == second);
  CHECK(inner_ptr->request_count() == before);

  fs::remove_all(dir);
}
