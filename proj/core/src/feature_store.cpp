#include "cafe/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "cafe/hashing.hpp"
#include "cafe/random.hpp"

namespace cafe {

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; big-endian hosts need byte swapping");

namespace {

void require_finite(const MatrixF& m, const char* what) {
  for (float v : m.values()) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + " contains a non-finite value");
  }
}

template <typename T>
void put(std::vector<std::byte>& out, T value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n) {
      throw ParseError(ParseErrorKind::kTruncated, bytes_.size(),
                       std::string(what) + " needs " + std::to_string(n) + " bytes from offset " +
                           std::to_string(pos_) + ", " + std::to_string(remaining()) + " available");
    }
  }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void copy(void* dst, std::uint64_t n, const char* what) {
    need(n, what);
    if (n > 0) std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  std::span<const std::byte> bytes_;
  std::uint64_t pos_ = 0;
};

MatrixF read_matrix(Reader& r, std::uint64_t rows, std::uint32_t cols, const char* what) {
  const std::uint64_t start = r.offset();
  const std::uint64_t row_bytes = std::uint64_t{cols} * sizeof(float);
  const std::uint64_t total = rows > UINT64_MAX / row_bytes ? UINT64_MAX : rows * row_bytes;
  r.need(total, what);
  MatrixF m(rows, cols);
  r.copy(m.values().data(), rows * cols * sizeof(float), what);
  auto vals = m.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!std::isfinite(vals[i])) {
      throw ParseError(ParseErrorKind::kNonFinite, start + i * sizeof(float), what);
    }
  }
  return m;
}

}  // namespace

std::uint64_t feature_file_size(std::uint64_t n, std::uint32_t c, std::uint32_t d) {
  return kFeatureHeaderBytes + n + n * c * sizeof(float) + n * d * sizeof(float);
}

FeatureDataset::FeatureDataset(std::string name, MatrixF frozen_features, MatrixF backbone_inputs,
                               std::vector<std::uint8_t> labels, std::uint32_t num_classes)
    : name_(std::move(name)),
      frozen_(std::move(frozen_features)),
      inputs_(std::move(backbone_inputs)),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  if (labels_.empty()) throw ValidationError("dataset must contain at least one sample");
  if (num_classes_ < 1 || num_classes_ > 255) {
    throw ValidationError("num_classes must be in [1, 255]");
  }
  if (frozen_.rows() != labels_.size() || inputs_.rows() != labels_.size()) {
    throw ValidationError("row counts of features, inputs and labels differ");
  }
  if (frozen_.cols() == 0 || inputs_.cols() == 0) {
    throw ValidationError("feature and input widths must be positive");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= num_classes_) {
      throw ValidationError("label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                            " is not below num_classes " + std::to_string(num_classes_));
    }
  }
  require_finite(frozen_, "frozen_features");
  require_finite(inputs_, "backbone_inputs");
}

std::size_t FeatureDataset::class_count(std::uint8_t label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

bool bit_identical(const FeatureDataset& a, const FeatureDataset& b) {
  return a.name() == b.name() && a.num_classes() == b.num_classes() &&
         std::ranges::equal(a.labels(), b.labels()) &&
         bit_equal(a.frozen_features(), b.frozen_features()) &&
         bit_equal(a.backbone_inputs(), b.backbone_inputs());
}

std::uint64_t frozen_checksum(const FeatureDataset& dataset) {
  return hash64(std::as_bytes(dataset.frozen_features().values()));
}

std::vector<std::byte> encode_features(const FeatureDataset& ds) {
  const auto n = static_cast<std::uint64_t>(ds.size());
  const auto c = static_cast<std::uint32_t>(ds.feature_dim());
  const auto d = static_cast<std::uint32_t>(ds.input_dim());
  std::vector<std::byte> out;
  out.reserve(feature_file_size(n, c, d));
  for (char ch : kFeatureMagic) out.push_back(static_cast<std::byte>(ch));
  put(out, kFeatureVersion);
  put(out, n);
  put(out, c);
  put(out, d);
  put(out, ds.num_classes());
  auto labels = std::as_bytes(ds.labels());
  out.insert(out.end(), labels.begin(), labels.end());
  auto f = std::as_bytes(ds.frozen_features().values());
  out.insert(out.end(), f.begin(), f.end());
  auto x = std::as_bytes(ds.backbone_inputs().values());
  out.insert(out.end(), x.begin(), x.end());
  return out;
}

FeatureDataset decode_features(std::span<const std::byte> bytes, std::string name) {
  Reader r(bytes);
  std::array<char, 8> magic{};
  if (bytes.size() < magic.size()) {
    throw ParseError(ParseErrorKind::kBadMagic, 0, "file shorter than magic");
  }
  r.copy(magic.data(), magic.size(), "magic");
  if (magic != kFeatureMagic) throw ParseError(ParseErrorKind::kBadMagic, 0, "");

  const std::uint64_t version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureVersion) {
    throw ParseError(ParseErrorKind::kBadVersion, version_at, "version " + std::to_string(version));
  }
  const std::uint64_t dims_at = r.offset();
  const auto n = r.get<std::uint64_t>("N");
  const auto c = r.get<std::uint32_t>("C");
  const auto d = r.get<std::uint32_t>("D");
  const auto l = r.get<std::uint32_t>("L");
  if (n == 0 || c == 0 || d == 0 || l == 0 || l > 255) {
    throw ParseError(ParseErrorKind::kBadHeader, dims_at,
                     "N=" + std::to_string(n) + " C=" + std::to_string(c) + " D=" +
                         std::to_string(d) + " L=" + std::to_string(l));
  }
  const std::uint64_t labels_at = r.offset();
  r.need(n, "labels");
  std::vector<std::uint8_t> labels(n);
  r.copy(labels.data(), n, "labels");
  for (std::uint64_t i = 0; i < n; ++i) {
    if (labels[i] >= l) {
      throw ParseError(ParseErrorKind::kLabelOutOfRange, labels_at + i,
                       "label " + std::to_string(labels[i]) + " >= L=" + std::to_string(l));
    }
  }
  MatrixF frozen = read_matrix(r, n, c, "frozen features");
  MatrixF inputs = read_matrix(r, n, d, "backbone inputs");
  if (r.remaining() != 0) {
    throw ParseError(ParseErrorKind::kTrailingBytes, r.offset(),
                     std::to_string(r.remaining()) + " unexpected bytes");
  }
  return FeatureDataset(std::move(name), std::move(frozen), std::move(inputs), std::move(labels), l);
}

void write_feature_file(const FeatureDataset& dataset, const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = encode_features(dataset);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move feature file into place: " + path.string());
  }
}

FeatureDataset read_feature_file(const std::filesystem::path& path, std::optional<std::string> name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return decode_features(std::as_bytes(std::span<const char>(raw)),
                         name.value_or(path.stem().string()));
}

Batch::Batch(const FeatureDataset& dataset, std::vector<std::size_t> indices)
    : dataset_(&dataset), indices_(std::move(indices)) {
  if (indices_.empty()) throw ArgumentError("Batch: empty index set");
  std::vector<bool> seen(dataset.size(), false);
  for (std::size_t i : indices_) {
    if (i >= dataset.size()) throw ArgumentError("Batch: index out of range");
    if (seen[i]) throw ArgumentError("Batch: duplicate index");
    seen[i] = true;
  }
}

namespace {
MatrixD gather(const MatrixF& src, std::span<const std::size_t> rows) {
  MatrixD out(rows.size(), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto in = src.row(rows[r]);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) dst[c] = in[c];
  }
  return out;
}
}  // namespace

MatrixD Batch::inputs() const { return gather(dataset_->backbone_inputs(), indices_); }
MatrixD Batch::frozen_features() const { return gather(dataset_->frozen_features(), indices_); }

std::vector<std::uint8_t> Batch::labels() const {
  std::vector<std::uint8_t> out;
  out.reserve(indices_.size());
  for (std::size_t i : indices_) out.push_back(dataset_->labels()[i]);
  return out;
}

std::vector<Batch> make_batches(const FeatureDataset& dataset, std::size_t batch_size,
                                std::uint64_t seed, bool shuffle) {
  const std::size_t n = dataset.size();
  if (batch_size == 0 || batch_size > n) {
    throw ArgumentError("make_batches: batch_size must be in [1, N]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
  }
  std::vector<Batch> batches;
  batches.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(dataset, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                           order.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return batches;
}

const ManifestEntry* Manifest::source() const {
  for (const auto& e : domains) {
    if (e.role == "source") return &e;
  }
  return nullptr;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["domains"] = nlohmann::json::array();
  for (const auto& e : manifest.domains) {
    j["domains"].push_back({{"name", e.name}, {"path", e.path}, {"sha256", e.sha256}, {"role", e.role}});
  }
  j["spec"] = manifest.spec;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    for (const auto& d : j.at("domains")) {
      m.domains.push_back({d.at("name").get<std::string>(), d.at("path").get<std::string>(),
                           d.value("sha256", std::string{}), d.value("role", std::string{"unseen"})});
    }
    if (j.contains("spec")) m.spec = j.at("spec");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

std::vector<FeatureDataset> load_manifest_datasets(const Manifest& manifest,
                                                   const std::filesystem::path& manifest_dir,
                                                   bool verify_sha256) {
  std::vector<FeatureDataset> out;
  out.reserve(manifest.domains.size());
  for (const auto& e : manifest.domains) {
    const auto file = manifest_dir / e.path;
    if (verify_sha256 && !e.sha256.empty()) {
      const std::string actual = sha256_file(file);
      if (actual != e.sha256) {
        throw ValidationError("sha256 mismatch for " + file.string() + ": manifest " + e.sha256 +
                              ", file " + actual);
      }
    }
    out.push_back(read_feature_file(file, e.name));
  }
  return out;
}

}  // namespace cafe
