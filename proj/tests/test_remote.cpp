#include <doctest.h>

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include "khid/embed.hpp"
#include "khid/error.hpp"

#include <httplib.h>

using namespace khid;
using namespace khid::embed;
using khid::io::json;

namespace {

// Vector whose entries encode the item's text length and position.
json vector_for(const std::string& text, std::size_t dim = kDimension) {
  json v = json::array();
  for (std::size_t i = 0; i < dim; ++i) v.push_back(static_cast<double>(text.size()) + 0.001 * static_cast<double>(i));
  return v;
}

// A well-behaved service; `mutate` may corrupt each response before sending.
class StubServer {
 public:
  using Mutator = std::function<void(json& response, httplib::Response& res)>;

  explicit StubServer(Mutator mutate = {}) : mutate_(std::move(mutate)) {
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"model", "stub"}, {"dimension", 768}, {"max_sequence_length", 512}}.dump(),
                      "application/json");
    });
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      json body = json::parse(req.body);
      {
        std::lock_guard lock(mutex_);
        requests_.push_back(body);
      }
      if (body.at("model") != "stub") {
        res.status = 404;
        res.set_content(json{{"error", "unknown model"}}.dump(), "application/json");
        return;
      }
      json out{{"v", 1}, {"items", json::array()}};
      const bool pooled = body.at("options").at("pooled").get<bool>();
      for (const auto& item : body.at("items")) {
        const std::string text = item.at("text");
        json o{{"id", item.at("id")}};
        if (pooled) {
          o["vector"] = vector_for(text);
          o["truncated"] = text.size() > 40;
        } else {
          o["token_vectors"] = json::array();
          std::size_t count = 0;
          for (std::size_t p = 0; p <= text.size(); ++p) {
            if (p == text.size() || text[p] == ' ') ++count;
          }
          // Leading classifier state, then one state per whitespace token.
          for (std::size_t k = 0; k <= count; ++k) o["token_vectors"].push_back(vector_for(std::string(k, 'x')));
        }
        out["items"].push_back(o);
      }
      res.set_content(out.dump(), "application/json");
      if (mutate_) mutate_(out, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  RemoteOptions options(std::string model = "stub", std::size_t max_batch = 64) const {
    RemoteOptions o;
    o.base_url = "http://127.0.0.1:" + std::to_string(port_);
    o.model = std::move(model);
    o.max_batch = max_batch;
    o.timeout_seconds = 10;
    return o;
  }
  std::vector<json> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  Mutator mutate_;
  mutable std::mutex mutex_;
  std::vector<json> requests_;
};

StubServer::Mutator rewrite(std::function<void(json&)> f) {
  return [f](json& out, httplib::Response& res) {
    f(out);
    res.set_content(out.dump(), "application/json");
  };
}

std::vector<std::pair<std::string, std::string>> items(int n) {
  std::vector<std::pair<std::string, std::string>> out;
  for (int i = 0; i < n; ++i) out.emplace_back("u" + std::to_string(i), std::string(static_cast<std::size_t>(i), 'a'));
  return out;
}

}  // namespace

TEST_CASE("request envelope") {
  auto req = RemoteProvider::make_request({{"a", "hello world"}}, "m", true);
  CHECK(req == json::parse(R"({"v":1,"model":"m","options":{"pooled":true},"items":[{"id":"a","text":"hello world"}]})"));
}

TEST_CASE("health") {
  StubServer stub;
  auto h = RemoteProvider(stub.options()).health();
  CHECK(h.model == "stub");
  CHECK(h.dimension == 768);
  CHECK(h.max_sequence_length == 512);
}

TEST_CASE("pooled vectors map back to their ids") {
  StubServer stub;
  RemoteProvider p(stub.options("stub", 4));
  auto out = p.encode_pooled(items(10));
  REQUIRE(out.size() == 10);
  for (int i = 0; i < 10; ++i) {
    const auto& r = out.at("u" + std::to_string(i));
    CHECK(r.vector.size() == 768);
    CHECK(r.vector(0) == static_cast<double>(i));
    CHECK_FALSE(r.truncated);
  }
  auto reqs = stub.requests();
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[0]["items"].size() == 4);
  CHECK(reqs[2]["items"].size() == 2);
  for (const auto& r : reqs) CHECK(r["options"]["pooled"] == true);
}

TEST_CASE("truncated flag is passed through") {
  StubServer stub;
  auto out = RemoteProvider(stub.options()).encode_pooled({{"long", std::string(50, 'z')}, {"short", "z"}});
  CHECK(out.at("long").truncated);
  CHECK_FALSE(out.at("short").truncated);
}

TEST_CASE("duplicate request ids are rejected before sending") {
  StubServer stub;
  CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled({{"a", "x"}, {"a", "y"}}), ContractError);
  CHECK(stub.requests().empty());
}

TEST_CASE("token states and segment vectors") {
  StubServer stub;
  RemoteProvider p(stub.options());
  Mat states = p.encode_tokens({"[M]", "a", "b"});
  CHECK(states.rows() == 4);
  CHECK(states.cols() == 768);
  auto req = stub.requests().back();
  CHECK(req["options"]["pooled"] == false);
  CHECK(req["items"].size() == 1);
  CHECK(req["items"][0]["text"] == "[M] a b");

  VectorXd seg = p.segment_vector({"[CLS]", "a", "b"});
  CHECK(stub.requests().back()["items"][0]["text"] == "a b");
  CHECK(seg(0) == 0.0);
  CHECK(p.tokenize("[M] Hello  world") == std::vector<std::string>{"[M]", "Hello", "world"});
}

TEST_CASE("unknown model is a lookup error") {
  StubServer stub;
  CHECK_THROWS_AS(RemoteProvider(stub.options("other")).encode_pooled(items(2)), LookupError);
}

TEST_CASE("malformed responses are rejected") {
  SUBCASE("missing id") {
    StubServer stub(rewrite([](json& o) { o["items"].erase(o["items"].begin()); }));
    CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled(items(3)), FormatError);
  }
  SUBCASE("duplicate id") {
    StubServer stub(rewrite([](json& o) { o["items"][1]["id"] = o["items"][0]["id"]; }));
    CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled(items(3)), FormatError);
  }
  SUBCASE("unexpected id") {
    StubServer stub(rewrite([](json& o) { o["items"][0]["id"] = "zzz"; }));
    CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled(items(3)), FormatError);
  }
  SUBCASE("wrong dimension") {
    StubServer stub(rewrite([](json& o) { o["items"][0]["vector"] = vector_for("a", 767); }));
    CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled(items(3)), FormatError);
  }
  SUBCASE("non-finite entry") {
    // JSON has no NaN literal; overflow to infinity through a huge exponent.
    StubServer stub([](json&, httplib::Response& res) {
      auto pos = res.body.find("\"vector\":[");
      res.body.replace(pos + 10, 1, "1e999");
    });
    CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled(items(3)), FormatError);
  }
  SUBCASE("wrong envelope version") {
    StubServer stub(rewrite([](json& o) { o["v"] = 2; }));
    CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled(items(1)), FormatError);
  }
  SUBCASE("body is not JSON") {
    StubServer stub([](json&, httplib::Response& res) { res.set_content("oops", "text/plain"); });
    CHECK_THROWS_AS(RemoteProvider(stub.options()).encode_pooled(items(1)), FormatError);
  }
  SUBCASE("server error") {
    StubServer stub([](json&, httplib::Response& res) {
      res.status = 500;
      res.set_content(R"({"error":"boom"})", "application/json");
    });
    try {
      RemoteProvider(stub.options()).encode_pooled(items(1));
      FAIL("expected Error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
  }
}

TEST_CASE("unreachable service") {
  RemoteOptions o;
  o.base_url = "http://127.0.0.1:1";
  o.timeout_seconds = 2;
  CHECK_THROWS_AS(RemoteProvider(o).health(), Error);
  CHECK_THROWS_AS(RemoteProvider(o).encode_pooled(items(1)), Error);
}

TEST_CASE("max_batch must be positive") {
  RemoteOptions o;
  o.max_batch = 0;
  CHECK_THROWS_AS(RemoteProvider{o}, ContractError);
}
