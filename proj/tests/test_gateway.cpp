#include "edct/error.hpp"
#include "edct/file_io.hpp"
#include "edct/gateway.hpp"
#include "edct/mock_transport.hpp"
#include "edct/rate_limiter.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

using namespace edct;
using tst::ok_text;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::precondition;
}

ProviderConfig text_provider() {
  ProviderConfig p;
  p.name = "llm";
  p.kind = "openai";
  p.endpoint_url = "https://example.invalid/v1/chat/completions";
  p.model_id = "m1";
  p.api_key_env = "LLM_KEY";
  return p;
}

Gateway cached_gateway(Mode mode, const std::filesystem::path& cache, std::shared_ptr<Transport> t) {
  GatewayOptions o;
  o.mode = mode;
  o.cache_dir = cache;
  o.clock = std::make_shared<SimulatedClock>();
  return Gateway(o, tst::resolve_to(std::move(t)));
}

}  // namespace

// Oracle digests recomputed outside this code base from the documented
// preimage: length-prefixed fields ("edct-request-v1", capability, model,
// payload, big-endian seed).
TEST(RequestDigest, MatchesIndependentOracle) {
  const std::string payload = R"({"max_output_tokens":2048,"turns":[{"role":"user","text":"hello"}]})";
  EXPECT_EQ(compute_digest(Capability::chat_text, "m1", payload, 0).hex(),
            "b6d7e61ceb6e75e03d74572ea6b524eeb93d5edcb71bec6284a6cf960ad7fa96");
  EXPECT_EQ(compute_digest(Capability::chat_text, "m1", payload, 1).hex(),
            "92e999a176b324ae04f626555719fa386bc80171dd0cf239c56b2fad6e983d3b");

  ChatSession s;
  s.append_user("hello");
  EXPECT_EQ(canonical_chat_payload(text_provider(), s.turns()), payload);
}

TEST(RequestDigest, OneByteChangesDigest) {
  std::mt19937 rng(1);
  for (int i = 0; i < 200; ++i) {
    std::string payload(1 + rng() % 64, '\0');
    for (auto& c : payload) c = static_cast<char>(rng());
    auto mutated = payload;
    mutated[rng() % mutated.size()] ^= static_cast<char>(1 + rng() % 255);
    EXPECT_NE(compute_digest(Capability::chat_text, "m", payload, 0),
              compute_digest(Capability::chat_text, "m", mutated, 0));
  }
  EXPECT_NE(compute_digest(Capability::chat_text, "m", "p", 0), compute_digest(Capability::chat_multimodal, "m", "p", 0));
  EXPECT_NE(compute_digest(Capability::chat_text, "m", "p", 0), compute_digest(Capability::chat_text, "n", "p", 0));
}

TEST(CanonicalPayload, ImageTravelsAsDigestNotBytes) {
  ChatSession s;
  const auto img = tst::png_attachment(3);
  s.append_user("q", img);
  const auto payload = canonical_chat_payload(text_provider(), s.turns());
  EXPECT_NE(payload.find(img.digest().hex()), std::string::npos);
  EXPECT_LT(payload.size(), img.bytes.size() + 200);
  auto p = text_provider();
  p.temperature = 0.2;
  EXPECT_NE(canonical_chat_payload(p, s.turns()).find("\"temperature\":0.2"), std::string::npos);
  EXPECT_EQ(payload.find("temperature"), std::string::npos);
}

TEST(ChatSessionType, Invariants) {
  ChatSession s("x");
  EXPECT_THROW(s.append_assistant("a"), Error);
  EXPECT_THROW(s.append_user(""), Error);
  s.append_user("q", tst::png_attachment());
  EXPECT_THROW(s.append_user("again"), Error);
  s.append_assistant("a");
  EXPECT_THROW(s.append_user("more", tst::png_attachment()), Error);
  s.append_user("more");
  EXPECT_EQ(s.turns().size(), 3u);
  EXPECT_TRUE(s.has_image());
}

TEST(ProviderConfigType, Validation) {
  auto p = text_provider();
  EXPECT_NO_THROW(p.validate());
  p.max_output_tokens = 0;
  EXPECT_EQ(code_of([&] { p.validate(); }), Errc::config_error);
  p = text_provider();
  p.endpoint_url.clear();
  EXPECT_EQ(code_of([&] { p.validate(); }), Errc::config_error);
  EXPECT_EQ(text_provider().max_output_tokens, 2048);
}

TEST(Gateway, ChatReturnsReplyAndExtendsSession) {
  auto t = std::make_shared<tst::ScriptedTransport>([](const TransportRequest& r) {
    EXPECT_EQ(r.capability, Capability::chat_multimodal);
    return ok_text(r.turns.size() == 1 ? "red" : "Because the car is red.");
  });
  auto g = tst::live_gateway(t);
  const auto p = text_provider();
  auto first = g.chat_complete(p, ChatSession("s"), "What color is the car?", tst::png_attachment());
  EXPECT_EQ(first.reply, "red");
  auto second = g.chat_complete(p, first.session, "why?");
  EXPECT_EQ(second.reply, "Because the car is red.");
  EXPECT_EQ(second.session.turns().size(), 4u);
  EXPECT_EQ(code_of([&] { g.chat_complete(p, second.session, ""); }), Errc::precondition);
}

TEST(Gateway, RecordThenReplayServesIdenticalBytesWithoutTransport) {
  tst::TempDir dir;
  const auto p = text_provider();
  auto live = std::make_shared<tst::ScriptedTransport>([](const TransportRequest&) { return ok_text("fixture reply F"); });
  {
    auto g = cached_gateway(Mode::record, dir / "cache", live);
    const auto a = g.chat_complete(p, ChatSession(), "hello");
    const auto b = g.chat_complete(p, ChatSession(), "hello");
    EXPECT_EQ(a.digest, b.digest);
    EXPECT_FALSE(a.from_cache);
    EXPECT_TRUE(b.from_cache);
    EXPECT_EQ(live->calls(), 1u);
    EXPECT_TRUE(std::filesystem::exists(dir / "cache" / a.digest.prefix() / (a.digest.hex() + ".req")));
    EXPECT_TRUE(std::filesystem::exists(dir / "cache" / a.digest.prefix() / (a.digest.hex() + ".resp")));
    EXPECT_TRUE(std::filesystem::exists(dir / "cache" / "index.jsonl"));
  }
  auto never = std::make_shared<tst::ScriptedTransport>([](const TransportRequest&) -> TransportResponse {
    ADD_FAILURE() << "transport used in replay";
    return ok_text("x");
  });
  auto g = cached_gateway(Mode::replay, dir / "cache", never);
  EXPECT_EQ(g.chat_complete(p, ChatSession(), "hello").reply, "fixture reply F");
  EXPECT_EQ(code_of([&] { g.chat_complete(p, ChatSession(), "other"); }), Errc::replay_miss);
  EXPECT_EQ(never->calls(), 0u);
  EXPECT_EQ(g.stats().transport_attempts, 0u);
}

TEST(Gateway, ModesNeedCacheDir) {
  auto t = std::make_shared<MockTransport>();
  GatewayOptions o;
  o.mode = Mode::record;
  EXPECT_EQ(code_of([&] { Gateway g(o, tst::resolve_to(t)); }), Errc::config_error);
  o.mode = Mode::replay;
  o.cache_dir = "/nonexistent/edct-cache";
  EXPECT_EQ(code_of([&] { Gateway g(o, tst::resolve_to(t)); }), Errc::config_error);
  EXPECT_EQ(code_of([] { parse_mode("strict"); }), Errc::config_error);
}

TEST(Gateway, RetryBudgetIsRespected) {
  for (int max_retries : {0, 1, 3, 5}) {
    auto t = std::make_shared<tst::ScriptedTransport>([](const TransportRequest&) { return tst::transient(); });
    auto g = tst::live_gateway(t);
    auto p = text_provider();
    p.max_retries = max_retries;
    EXPECT_EQ(code_of([&] { g.chat_complete(p, ChatSession(), "hi"); }), Errc::retryable_exhausted);
    EXPECT_EQ(t->calls(), static_cast<std::size_t>(max_retries + 1));
    EXPECT_EQ(g.stats().retries, static_cast<std::size_t>(max_retries));
  }
}

TEST(Gateway, TransientThenSuccess) {
  int n = 0;
  auto t = std::make_shared<tst::ScriptedTransport>([&](const TransportRequest&) {
    if (++n < 3) throw std::runtime_error("connection reset");
    return ok_text("finally");
  });
  auto g = tst::live_gateway(t);
  EXPECT_EQ(g.chat_complete(text_provider(), ChatSession(), "hi").reply, "finally");
  EXPECT_EQ(t->calls(), 3u);
}

TEST(Gateway, RefusalIsNotRetried) {
  auto t = std::make_shared<tst::ScriptedTransport>([](const TransportRequest&) { return tst::refusal("policy"); });
  auto g = tst::live_gateway(t);
  EXPECT_EQ(code_of([&] { g.chat_complete(text_provider(), ChatSession(), "hi"); }), Errc::provider_refusal);
  EXPECT_EQ(t->calls(), 1u);
}

TEST(Gateway, EmptyReplyIsRefusal) {
  auto t = std::make_shared<tst::ScriptedTransport>([](const TransportRequest&) { return ok_text("  \n"); });
  auto g = tst::live_gateway(t);
  try {
    g.chat_complete(text_provider(), ChatSession(), "hi");
    FAIL();
  } catch (const EmptyReplyError& e) {
    EXPECT_EQ(e.code(), Errc::provider_refusal);
  }
  EXPECT_EQ(t->calls(), 1u);
}

TEST(Gateway, BackoffGrowsWithJitterInRange) {
  auto g = tst::live_gateway(std::make_shared<MockTransport>());
  for (int attempt = 0; attempt < 8; ++attempt) {
    const auto d = g.backoff_delay(attempt);
    const double nominal = std::min(500.0 * (1 << attempt), 30000.0) * 1e6;
    EXPECT_GE(static_cast<double>(d.count()), 0.5 * nominal);
    EXPECT_LT(static_cast<double>(d.count()), nominal);
  }
}

TEST(Gateway, EditImageSeedsAreDistinctCacheEntries) {
  tst::TempDir dir;
  auto t = std::make_shared<tst::ScriptedTransport>([](const TransportRequest& r) {
    TransportResponse resp;
    resp.body = tst::make_png(8, 8, static_cast<std::uint32_t>(r.edit->seed));
    resp.media_type = "image/png";
    return resp;
  });
  auto g = cached_gateway(Mode::record, dir / "cache", t);
  auto editor = tst::mock_provider("editor");
  ImageEditRequest req{tst::png_attachment(), "make it blue", "red", 1};
  const auto a = g.edit_image(editor, req);
  req.seed = 2;
  const auto b = g.edit_image(editor, req);
  EXPECT_NE(a.digest, b.digest);
  EXPECT_NE(a.bytes, b.bytes);
  EXPECT_EQ(a.media_type, "image/png");
  EXPECT_EQ(a.width, 8u);
  EXPECT_EQ(t->calls(), 2u);

  auto replay = cached_gateway(Mode::replay, dir / "cache", t);
  EXPECT_EQ(replay.edit_image(editor, req).bytes, b.bytes);

  req.positive_prompt.clear();
  EXPECT_EQ(code_of([&] { g.edit_image(editor, req); }), Errc::precondition);
  ImageEditRequest garbage{{"not an image", "image/png"}, "x", "", 0};
  EXPECT_EQ(code_of([&] { g.edit_image(editor, garbage); }), Errc::precondition);
}

TEST(Gateway, NonImageEditReplyIsUndecodable) {
  auto t = std::make_shared<tst::ScriptedTransport>([](const TransportRequest&) { return ok_text("{\"error\":\"x\"}"); });
  auto g = tst::live_gateway(t);
  ImageEditRequest req{tst::png_attachment(), "edit", "", 0};
  EXPECT_EQ(code_of([&] { g.edit_image(tst::mock_provider("e"), req); }), Errc::undecodable_image);
}

TEST(RateLimiter, SlidingWindowCapHoldsOnSimulatedClock) {
  SimulatedClock clock;
  const std::size_t cap = 5;
  SlidingWindowRateLimiter limiter(cap, std::chrono::seconds(60), clock);
  std::vector<Clock::time_point> admitted;
  std::mt19937 rng(4);
  for (int i = 0; i < 200; ++i) {
    clock.advance(std::chrono::milliseconds(rng() % 8000));
    admitted.push_back(limiter.acquire());
  }
  for (std::size_t i = 0; i < admitted.size(); ++i) {
    std::size_t in_window = 0;
    for (std::size_t j = i; j < admitted.size() && admitted[j] - admitted[i] < std::chrono::seconds(60); ++j) {
      ++in_window;
    }
    ASSERT_LE(in_window, cap) << i;
  }
}

TEST(RateLimiter, GatewayEnforcesPerProviderCap) {
  auto clock = std::make_shared<SimulatedClock>();
  std::vector<Clock::time_point> times;
  auto t = std::make_shared<tst::ScriptedTransport>([&](const TransportRequest&) {
    times.push_back(clock->now());
    return ok_text("ok");
  });
  GatewayOptions o;
  o.clock = clock;
  Gateway g(o, tst::resolve_to(t));
  auto p = text_provider();
  p.requests_per_minute = 3;
  for (int i = 0; i < 10; ++i) g.chat_complete(p, ChatSession(), "q" + std::to_string(i));
  for (std::size_t i = 0; i + 3 < times.size(); ++i) EXPECT_GE(times[i + 3] - times[i], std::chrono::seconds(60));
}

TEST(Gateway, ConcurrentUseIsSafe) {
  tst::TempDir dir;
  auto t = std::make_shared<tst::ScriptedTransport>([](const TransportRequest& r) { return ok_text("re: " + r.turns.back().text); });
  auto g = cached_gateway(Mode::record, dir / "cache", t);
  auto p = text_provider();
  p.requests_per_minute = 100000;
  std::vector<std::jthread> threads;
  for (int w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < 25; ++i) {
        const auto q = "q" + std::to_string((w * 25 + i) % 50);
        EXPECT_EQ(g.chat_complete(p, ChatSession(), q).reply, "re: " + q);
      }
    });
  }
  threads.clear();
  // index.jsonl gets one well-formed line per stored response.
  const auto index = read_file(dir / "cache" / "index.jsonl");
  std::size_t lines = 0;
  for (char c : index) lines += c == '\n';
  EXPECT_GE(lines, 50u);
  EXPECT_LE(lines, t->calls());
}

TEST(MockTransport, FaithfulAndUnfaithfulPersonas) {
  auto g = tst::live_gateway(std::make_shared<MockTransport>());
  const auto faithful = tst::mock_provider("vlm", "faithful");
  const auto unfaithful = tst::mock_provider("vlm", "unfaithful");
  const auto a1 = g.chat_complete(faithful, ChatSession(), "q?", tst::png_attachment(1)).reply;
  const auto a2 = g.chat_complete(faithful, ChatSession(), "q?", tst::png_attachment(2)).reply;
  EXPECT_NE(a1, a2);
  const auto u1 = g.chat_complete(unfaithful, ChatSession(), "q?", tst::png_attachment(1)).reply;
  const auto u2 = g.chat_complete(unfaithful, ChatSession(), "q?", tst::png_attachment(2)).reply;
  EXPECT_EQ(u1, u2);
  EXPECT_EQ(code_of([&] { g.chat_complete(tst::mock_provider("vlm", "refuse"), ChatSession(), "q", tst::png_attachment()); }),
            Errc::provider_refusal);
}
