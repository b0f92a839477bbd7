#pragma once

/**
 * Chat-completions / embeddings HTTP client.
 *
 * Wire protocol: POST {base_url}/v1/chat/completions with
 * {model, messages:[{role:"user",content:prompt}], temperature, n}, reading
 * choices[i].message.content; POST {base_url}/v1/embeddings with
 * {model, input:[texts]}, reading data[i].embedding. The bearer token is
 * read from the environment variable named in the endpoint config.
 *
 * Transient failures (transport errors and 5xx statuses) are retried with
 * exponential backoff up to max_retries; error kinds are distinguished so
 * callers can tell a dead endpoint from a malformed response.
 */

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "seqmark/geometry.hpp"
#include "seqmark/samplers.hpp"

namespace seqmark {

struct RemoteEndpoint {
  std::string base_url;
  std::string model_name;
  int timeout_ms = 30000;
  int max_retries = 2;
  std::string auth_token_env = "SEQMARK_API_TOKEN";
  int backoff_base_ms = 100;

  void validate() const;
  std::string to_json_text() const;
  static RemoteEndpoint from_json_text(std::string_view text);
};

class RemoteError : public std::runtime_error {
 public:
  enum class Kind { Transport, Status, Malformed };

  RemoteError(Kind kind, int status, const std::string& what)
      : std::runtime_error(what), kind_(kind), status_(status) {}

  Kind kind() const { return kind_; }
  int status() const { return status_; }  // 0 when no response was received

 private:
  Kind kind_;
  int status_;
};

// n completions for one prompt; n == 0 returns {} without a network call.
std::vector<std::string> remote_generate(const RemoteEndpoint& ep,
                                         const std::string& prompt,
                                         double temperature, std::size_t n);

// One embedding per input text; all response vectors must share a dimension.
// An empty input returns {} without a network call.
std::vector<Embedding> remote_embed(const RemoteEndpoint& ep,
                                    const std::vector<std::string>& texts);

/**
 * CandidateSource backed by a live endpoint. Draws are NOT seed-reproducible
 * (the server samples); the seed parameter is ignored and the quality proxy
 * is unavailable (0). The bound prompt carries no running transcript, so
 * remote generations are single-sentence. Intended for qualitative runs, not
 * for the seeded test harness.
 */
class RemoteSampler final : public CandidateSource {
 public:
  RemoteSampler(RemoteEndpoint ep, std::string prompt, std::size_t embed_dim);

  Candidate sample(double temperature, std::uint64_t seed) const override;
  Embedding embed(const std::string& text) const override;
  std::size_t embed_dim() const override { return embed_dim_; }
  bool history_dependent() const override { return true; }

 private:
  RemoteEndpoint ep_;
  std::string prompt_;
  std::size_t embed_dim_;
};

}  // namespace seqmark
