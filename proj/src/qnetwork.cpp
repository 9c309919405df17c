#include "planex/qnetwork.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace planex {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kMagic = "PLANEX-CKPT 1";
constexpr double kEmbeddingScale = 1.0;

double unit_uniform(uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double limit, uint64_t& state) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = (2.0 * unit_uniform(state) - 1.0) * limit;
    }
  }
}

void write_doubles(std::ostream& out, const double* data, size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& in, double* data, size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw CheckpointError("checkpoint truncated");
}

}  // namespace

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void QGradient::reset(const EncoderConfig& config) {
  w1 = Eigen::MatrixXd::Zero(config.hidden_dim, config.embed_dim);
  b1 = Eigen::VectorXd::Zero(config.hidden_dim);
  w = Eigen::VectorXd::Zero(config.hidden_dim);
  b = 0.0;
  rows.clear();
}

QNetwork::QNetwork(const EncoderConfig& config, uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  const int d = config_.embed_dim;
  const int h = config_.hidden_dim;
  uint64_t state = seed ^ 0x5bd1e9955bd1e995ULL;
  w1_.resize(h, d);
  fill_uniform(w1_, std::sqrt(6.0 / (d + h)), state);
  b1_ = Eigen::VectorXd::Zero(h);
  w_.resize(h);
  fill_uniform(w_, std::sqrt(6.0 / (h + 1)), state);
  b_ = 0.0;
}

Eigen::VectorXd QNetwork::embedding(uint64_t bucket) const {
  if (auto it = rows_.find(bucket); it != rows_.end()) return it->second;
  Eigen::VectorXd row(config_.embed_dim);
  uint64_t state = seed_ * 0x9e3779b97f4a7c15ULL + bucket;
  for (int i = 0; i < config_.embed_dim; ++i) {
    row[i] = (2.0 * unit_uniform(state) - 1.0) * kEmbeddingScale;
  }
  return row;
}

Eigen::VectorXd& QNetwork::mutable_embedding(uint64_t bucket) {
  auto it = rows_.find(bucket);
  if (it == rows_.end()) it = rows_.emplace(bucket, embedding(bucket)).first;
  return it->second;
}

Eigen::VectorXd QNetwork::pooled(const Features& features) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(config_.embed_dim);
  if (features.empty()) return x;
  for (uint64_t f : features) x += embedding(f);
  return x / static_cast<double>(features.size());
}

double QNetwork::q_value(const Features& features) const {
  const Eigen::VectorXd h = (w1_ * pooled(features) + b1_).array().tanh().matrix();
  return w_.dot(h) + b_;
}

double QNetwork::q_value(const ExtractionState& state, const std::string& action) const {
  return q_value(featurize(state, action, config_));
}

double QNetwork::accumulate_gradient(const Features& features, double scale,
                                     QGradient& grad) const {
  const Eigen::VectorXd x = pooled(features);
  const Eigen::VectorXd h = (w1_ * x + b1_).array().tanh().matrix();
  const double q = w_.dot(h) + b_;

  grad.b += scale;
  grad.w += scale * h;
  const Eigen::VectorXd dz = (scale * w_).cwiseProduct(
      (1.0 - h.array().square()).matrix());
  grad.w1 += dz * x.transpose();
  grad.b1 += dz;
  if (!features.empty()) {
    const Eigen::VectorXd dx = (w1_.transpose() * dz) / static_cast<double>(features.size());
    for (uint64_t f : features) {
      auto it = grad.rows.find(f);
      if (it == grad.rows.end()) {
        grad.rows.emplace(f, dx);
      } else {
        it->second += dx;
      }
    }
  }
  return q;
}

bool QNetwork::operator==(const QNetwork& other) const {
  return config_ == other.config_ && seed_ == other.seed_ && w1_ == other.w1_ &&
         b1_ == other.b1_ && w_ == other.w_ && b_ == other.b_ && rows_ == other.rows_;
}

void QNetwork::save(const std::filesystem::path& path, const std::string& config_digest) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  const json header{{"encoder", config_.to_json()},
                    {"seed", seed_},
                    {"config_digest", config_digest},
                    {"rows", rows_.size()}};
  out << kMagic << '\n' << header.dump() << '\n';
  write_doubles(out, w_.data(), w_.size());
  write_doubles(out, &b_, 1);
  write_doubles(out, w1_.data(), w1_.size());
  write_doubles(out, b1_.data(), b1_.size());

  std::vector<uint64_t> buckets;
  buckets.reserve(rows_.size());
  for (const auto& [bucket, row] : rows_) buckets.push_back(bucket);
  std::sort(buckets.begin(), buckets.end());
  for (uint64_t bucket : buckets) {
    out.write(reinterpret_cast<const char*>(&bucket), sizeof(bucket));
    write_doubles(out, rows_.at(bucket).data(), config_.embed_dim);
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

QNetwork QNetwork::load(const std::filesystem::path& path, std::string* config_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kMagic) throw CheckpointError(path.string() + " is not a checkpoint");
  std::getline(in, header_line);
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  QNetwork net(EncoderConfig::from_json(header.at("encoder")),
               header.at("seed").get<uint64_t>());
  read_doubles(in, net.w_.data(), net.w_.size());
  read_doubles(in, &net.b_, 1);
  read_doubles(in, net.w1_.data(), net.w1_.size());
  read_doubles(in, net.b1_.data(), net.b1_.size());
  const auto rows = header.at("rows").get<size_t>();
  for (size_t i = 0; i < rows; ++i) {
    uint64_t bucket = 0;
    in.read(reinterpret_cast<char*>(&bucket), sizeof(bucket));
    Eigen::VectorXd row(net.config_.embed_dim);
    read_doubles(in, row.data(), row.size());
    net.rows_.emplace(bucket, std::move(row));
  }
  if (config_digest != nullptr) *config_digest = header.value("config_digest", "");
  return net;
}

}  // namespace planex
