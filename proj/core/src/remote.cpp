#include "seqmark/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace seqmark {

namespace {

using nlohmann::json;

void RemoteEndpoint_require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("RemoteEndpoint: ") + what);
}

// POSTs with retry/backoff; returns the parsed body of the first 2xx reply.
json post_json(const RemoteEndpoint& ep, const std::string& path,
               const json& body) {
  ep.validate();
  httplib::Client client(ep.base_url);
  client.set_connection_timeout(std::chrono::milliseconds(ep.timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(ep.timeout_ms));
  client.set_write_timeout(std::chrono::milliseconds(ep.timeout_ms));

  httplib::Headers headers;
  if (const char* token = std::getenv(ep.auth_token_env.c_str());
      token != nullptr && token[0] != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string payload = body.dump();
  int last_status = 0;
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          ep.backoff_base_ms * (1 << (attempt - 1))));
    }
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw RemoteError(RemoteError::Kind::Malformed, res->status,
                          std::string("unparseable response body: ") + e.what());
      }
    }
    last_status = res->status;
    last_error = "HTTP " + std::to_string(res->status) + " from " + path;
    if (res->status < 500) {
      // 4xx will not improve on retry.
      throw RemoteError(RemoteError::Kind::Status, res->status, last_error);
    }
  }
  throw RemoteError(last_status == 0 ? RemoteError::Kind::Transport
                                     : RemoteError::Kind::Status,
                    last_status,
                    last_error + " after " +
                        std::to_string(ep.max_retries + 1) + " attempts");
}

}  // namespace

void RemoteEndpoint::validate() const {
  RemoteEndpoint_require(base_url.rfind("http://", 0) == 0 ||
                             base_url.rfind("https://", 0) == 0,
                         "base_url must start with http:// or https://");
  RemoteEndpoint_require(!model_name.empty(), "model_name must be set");
  RemoteEndpoint_require(max_retries >= 0, "max_retries must be >= 0");
  RemoteEndpoint_require(timeout_ms > 0, "timeout must be positive");
}

std::string RemoteEndpoint::to_json_text() const {
  json j{{"base_url", base_url},
         {"model", model_name},
         {"timeout_ms", timeout_ms},
         {"max_retries", max_retries},
         {"auth_token_env", auth_token_env},
         {"backoff_base_ms", backoff_base_ms}};
  return j.dump();
}

RemoteEndpoint RemoteEndpoint::from_json_text(std::string_view text) {
  const auto j = json::parse(text);
  RemoteEndpoint ep;
  ep.base_url = j.at("base_url").get<std::string>();
  ep.model_name = j.at("model").get<std::string>();
  if (j.contains("timeout_ms")) ep.timeout_ms = j.at("timeout_ms").get<int>();
  if (j.contains("max_retries")) ep.max_retries = j.at("max_retries").get<int>();
  if (j.contains("auth_token_env")) {
    ep.auth_token_env = j.at("auth_token_env").get<std::string>();
  }
  if (j.contains("backoff_base_ms")) {
    ep.backoff_base_ms = j.at("backoff_base_ms").get<int>();
  }
  ep.validate();
  return ep;
}

std::vector<std::string> remote_generate(const RemoteEndpoint& ep,
                                         const std::string& prompt,
                                         double temperature, std::size_t n) {
  if (n == 0) return {};
  const json body{{"model", ep.model_name},
                  {"messages", json::array({json{{"role", "user"},
                                                 {"content", prompt}}})},
                  {"temperature", temperature},
                  {"n", n}};
  const json reply = post_json(ep, "/v1/chat/completions", body);
  std::vector<std::string> out;
  try {
    for (const auto& choice : reply.at("choices")) {
      out.push_back(choice.at("message").at("content").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw RemoteError(RemoteError::Kind::Malformed, 200,
                      std::string("unexpected completion shape: ") + e.what());
  }
  if (out.size() != n) {
    throw RemoteError(RemoteError::Kind::Malformed, 200,
                      "expected " + std::to_string(n) + " choices, got " +
                          std::to_string(out.size()));
  }
  return out;
}

std::vector<Embedding> remote_embed(const RemoteEndpoint& ep,
                                    const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  const json body{{"model", ep.model_name}, {"input", texts}};
  const json reply = post_json(ep, "/v1/embeddings", body);
  std::vector<Embedding> out;
  try {
    for (const auto& item : reply.at("data")) {
      out.push_back(item.at("embedding").get<Embedding>());
    }
  } catch (const json::exception& e) {
    throw RemoteError(RemoteError::Kind::Malformed, 200,
                      std::string("unexpected embedding shape: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw RemoteError(RemoteError::Kind::Malformed, 200,
                      "embedding count does not match input count");
  }
  for (const auto& v : out) {
    if (v.size() != out.front().size() || v.empty() || !all_finite(v)) {
      throw RemoteError(RemoteError::Kind::Malformed, 200,
                        "embedding vectors are empty, non-finite, or mixed-dimension");
    }
  }
  return out;
}

RemoteSampler::RemoteSampler(RemoteEndpoint ep, std::string prompt,
                             std::size_t embed_dim)
    : ep_(std::move(ep)), prompt_(std::move(prompt)), embed_dim_(embed_dim) {}

Candidate RemoteSampler::sample(double temperature, std::uint64_t /*seed*/) const {
  const auto texts = remote_generate(ep_, prompt_, temperature, 1);
  const auto embeddings = remote_embed(ep_, texts);
  Candidate cand;
  cand.text = texts.front();
  cand.embedding = embeddings.front();
  cand.quality = 0.0;  // no likelihood proxy over the wire
  return cand;
}

Embedding RemoteSampler::embed(const std::string& text) const {
  return remote_embed(ep_, {text}).front();
}

}  // namespace seqmark
