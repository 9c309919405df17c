#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "planex/backend.hpp"

namespace planex {

struct BackendConfig {
  std::string endpoint;  // full URL of the chat-completion route
  std::string model;
  std::string api_key;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 2048;
  std::chrono::milliseconds timeout{6000};
  int max_retries = 2;
  std::chrono::milliseconds backoff{500};  // doubled after every retry
  int concurrency = 4;

  void validate() const;
  // Reads fields from `j`; PLANEX_ENDPOINT and PLANEX_API_KEY fill the
  // endpoint and credential when the environment provides them.
  static BackendConfig from_json(const nlohmann::json& j);
  // Resolved values without the credential.
  nlohmann::json to_json() const;
};

struct HttpRequest {
  std::string url;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
  std::chrono::milliseconds timeout{6000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Throws TransportError when no response was received.
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

// cpp-httplib client; supports http:// and https:// endpoints.
class HttpTransport : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override;
};

enum class TranscriptMode { kRecord, kReplay, kPassthrough };

TranscriptMode parse_transcript_mode(const std::string& text);
std::string to_string(TranscriptMode mode);

// Request digest -> reply cache, persisted as an append-only JSON-lines file.
// Replay mode never reaches the transport.
class TranscriptStore {
 public:
  TranscriptStore(TranscriptMode mode, std::filesystem::path path);

  TranscriptMode mode() const { return mode_; }
  std::optional<std::string> lookup(const std::string& key) const;
  void record(const std::string& key, const std::string& reply);
  size_t size() const;

 private:
  TranscriptMode mode_;
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> entries_;
};

// Digest of (model, temperature, top_p, prompt).
std::string transcript_key(const BackendConfig& config, const std::string& prompt);

// Chat-completion request body; byte-stable for fixed inputs.
std::string build_request_body(const BackendConfig& config, const std::string& prompt);

// Content of the first choice's message.
std::string parse_completion_reply(const std::string& body);

class RemoteBackend : public Classifier, public Extractor, public Judge {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RemoteBackend(BackendConfig config, PromptSet prompts,
                std::shared_ptr<Transport> transport,
                std::shared_ptr<TranscriptStore> transcripts = nullptr);

  std::vector<std::string> classify(const std::string& sentence,
                                    const std::vector<std::string>& candidates) override;
  std::string extract(const ExtractorInput& input) override;
  int judge(const std::string& extracted, const std::string& ground_truth) override;

  // Sends one prompt, honoring the transcript mode, retries and the
  // concurrency limit.
  std::string complete(const std::string& prompt);

  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
  const BackendConfig& config() const { return config_; }
  size_t network_calls() const { return network_calls_.load(); }

 private:
  std::string send_with_retries(const std::string& prompt);

  BackendConfig config_;
  PromptSet prompts_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<TranscriptStore> transcripts_;
  std::counting_semaphore<1024> slots_;
  Sleeper sleeper_;
  std::atomic<size_t> network_calls_{0};
};

}  // namespace planex
