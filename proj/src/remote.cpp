#include "planex/remote.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "planex/digest.hpp"
#include "planex/log.hpp"

namespace planex {

using nlohmann::json;

std::vector<std::string> filter_candidates(const std::vector<std::string>& reply_items,
                                           const std::vector<std::string>& candidates) {
  std::vector<std::string> out;
  for (const auto& item : reply_items) {
    if (std::find(candidates.begin(), candidates.end(), item) != candidates.end()) {
      out.push_back(item);
    } else {
      log_warning("classifier named non-candidate type '" + item + "'; dropped");
    }
  }
  return out;
}

// ---- BackendConfig ----

void BackendConfig::validate() const {
  if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (timeout.count() <= 0) throw std::invalid_argument("timeout must be > 0");
  if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (concurrency < 1 || concurrency > 1024) {
    throw std::invalid_argument("concurrency must be in [1, 1024]");
  }
}

BackendConfig BackendConfig::from_json(const json& j) {
  BackendConfig c;
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.model);
  c.temperature = j.value("temperature", c.temperature);
  c.top_p = j.value("top_p", c.top_p);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", c.timeout.count()));
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff = std::chrono::milliseconds(j.value("backoff_ms", c.backoff.count()));
  c.concurrency = j.value("concurrency", c.concurrency);
  if (const char* url = std::getenv("PLANEX_ENDPOINT"); url && *url) c.endpoint = url;
  if (const char* key = std::getenv("PLANEX_API_KEY"); key && *key) c.api_key = key;
  c.validate();
  return c;
}

json BackendConfig::to_json() const {
  return {{"endpoint", endpoint},       {"model", model},
          {"temperature", temperature}, {"top_p", top_p},
          {"max_tokens", max_tokens},   {"timeout_ms", timeout.count()},
          {"max_retries", max_retries}, {"backoff_ms", backoff.count()},
          {"concurrency", concurrency}};
}

// ---- HttpTransport ----

HttpResponse HttpTransport::post(const HttpRequest& request) {
  const auto scheme_end = request.url.find("://");
  if (scheme_end == std::string::npos) {
    throw TransportError("endpoint URL lacks a scheme: " + request.url);
  }
  const auto path_begin = request.url.find('/', scheme_end + 3);
  const std::string origin = request.url.substr(0, path_begin);
  const std::string path =
      path_begin == std::string::npos ? "/" : request.url.substr(path_begin);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);
  auto res = client.Post(path, headers, request.body, "application/json");
  if (!res) {
    throw TransportError("request to " + request.url + " failed: " +
                         httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

// ---- TranscriptStore ----

TranscriptMode parse_transcript_mode(const std::string& text) {
  if (text == "record") return TranscriptMode::kRecord;
  if (text == "replay") return TranscriptMode::kReplay;
  if (text == "passthrough" || text == "off") return TranscriptMode::kPassthrough;
  throw std::invalid_argument("unknown transcript mode '" + text + "'");
}

std::string to_string(TranscriptMode mode) {
  switch (mode) {
    case TranscriptMode::kRecord:
      return "record";
    case TranscriptMode::kReplay:
      return "replay";
    case TranscriptMode::kPassthrough:
      return "passthrough";
  }
  return "passthrough";
}

TranscriptStore::TranscriptStore(TranscriptMode mode, std::filesystem::path path)
    : mode_(mode), path_(std::move(path)) {
  if (path_.empty()) return;
  std::ifstream in(path_);
  if (!in) {
    if (mode_ == TranscriptMode::kReplay) {
      throw std::runtime_error("transcript file not found: " + path_.string());
    }
    return;
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    entries_[j.at("key").get<std::string>()] = j.at("reply").get<std::string>();
  }
}

std::optional<std::string> TranscriptStore::lookup(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TranscriptStore::record(const std::string& key, const std::string& reply) {
  std::lock_guard lock(mutex_);
  if (!entries_.emplace(key, reply).second) return;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << json{{"key", key}, {"reply", reply}}.dump() << '\n';
}

size_t TranscriptStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string transcript_key(const BackendConfig& config, const std::string& prompt) {
  const json j{{"model", config.model},
               {"temperature", config.temperature},
               {"top_p", config.top_p},
               {"prompt", prompt}};
  return sha256_hex(j.dump());
}

std::string build_request_body(const BackendConfig& config, const std::string& prompt) {
  const json j{{"model", config.model},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
               {"temperature", config.temperature},
               {"top_p", config.top_p},
               {"max_tokens", config.max_tokens}};
  return j.dump();
}

std::string parse_completion_reply(const std::string& body) {
  try {
    const json j = json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("unparseable completion reply: ") + e.what());
  }
}

// ---- RemoteBackend ----

namespace {

BackendConfig validated(BackendConfig config) {
  config.validate();
  return config;
}

}  // namespace

RemoteBackend::RemoteBackend(BackendConfig config, PromptSet prompts,
                             std::shared_ptr<Transport> transport,
                             std::shared_ptr<TranscriptStore> transcripts)
    : config_(validated(std::move(config))),
      prompts_(std::move(prompts)),
      transport_(std::move(transport)),
      transcripts_(std::move(transcripts)),
      slots_(config_.concurrency),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

std::string RemoteBackend::complete(const std::string& prompt) {
  if (!transcripts_ || transcripts_->mode() == TranscriptMode::kPassthrough) {
    return send_with_retries(prompt);
  }
  const auto key = transcript_key(config_, prompt);
  if (auto cached = transcripts_->lookup(key)) return *cached;
  if (transcripts_->mode() == TranscriptMode::kReplay) {
    throw BackendError("transcript miss in replay mode for key " + key);
  }
  auto reply = send_with_retries(prompt);
  transcripts_->record(key, reply);
  return reply;
}

std::string RemoteBackend::send_with_retries(const std::string& prompt) {
  if (!transport_) throw BackendError("remote backend has no transport");
  HttpRequest request;
  request.url = config_.endpoint;
  request.body = build_request_body(config_, prompt);
  request.timeout = config_.timeout;
  request.headers.emplace_back("Content-Type", "application/json");
  if (!config_.api_key.empty()) {
    request.headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  }

  auto delay = config_.backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      sleeper_(delay);
      delay *= 2;
    }
    HttpResponse response;
    try {
      slots_.acquire();
      ++network_calls_;
      try {
        response = transport_->post(request);
      } catch (...) {
        slots_.release();
        throw;
      }
      slots_.release();
    } catch (const TransportError& e) {
      last_error = e.what();
      log_warning("backend attempt " + std::to_string(attempt + 1) + ": " + last_error);
      continue;
    }
    if (response.status == 200) return parse_completion_reply(response.body);
    last_error = "HTTP status " + std::to_string(response.status);
    if (response.status != 429 && response.status < 500) break;
    log_warning("backend attempt " + std::to_string(attempt + 1) + ": " + last_error);
  }
  throw BackendError("backend request failed: " + last_error);
}

std::vector<std::string> RemoteBackend::classify(
    const std::string& sentence, const std::vector<std::string>& candidates) {
  const auto prompt = render_classification_prompt(
      sentence, candidates, prompts_.examples.classify, prompts_.classify);
  return filter_candidates(parse_list_reply(complete(prompt)), candidates);
}

std::string RemoteBackend::extract(const ExtractorInput& input) {
  return complete(render_extraction_prompt(input, prompts_.examples.extract,
                                           prompts_.extract));
}

int RemoteBackend::judge(const std::string& extracted, const std::string& ground_truth) {
  const auto reply = complete(render_judge_prompt(extracted, ground_truth,
                                                  prompts_.examples.judge,
                                                  prompts_.judge));
  try {
    return parse_judge_reply(reply);
  } catch (const JudgeParseError& e) {
    log_warning(std::string(e.what()) + "; scoring 0");
    return 0;
  }
}

}  // namespace planex
