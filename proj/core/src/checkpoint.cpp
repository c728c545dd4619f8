#include "cafe/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "cafe/errors.hpp"
#include "cafe/trainer.hpp"

namespace cafe {

nlohmann::json checkpoint_header(const MaskNetwork& net, const nlohmann::json& config) {
  const NetworkShape& s = net.shape();
  std::vector<std::size_t> widths{s.input_dim};
  widths.insert(widths.end(), s.hidden.begin(), s.hidden.end());
  widths.push_back(s.backbone_width());
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& slot : net.slots()) layout.push_back(slot.name);
  return {{"format", "cafe-checkpoint"},
          {"version", 1},
          {"widths", widths},
          {"C", s.feature_dim},
          {"L", s.num_classes},
          {"fc_bias", s.fc_bias},
          {"use_mask", s.use_mask},
          {"seed", config.value("seed", std::uint64_t{0})},
          {"config", config},
          {"config_hash", config_hash(config)},
          {"num_params", net.num_parameters()},
          {"layout", layout}};
}

void save_checkpoint(const MaskNetwork& net, const std::filesystem::path& path, const nlohmann::json& config) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << checkpoint_header(net, config).dump() << '\n';
  const auto params = net.parameters();
  out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(ParseErrorKind::kTruncated, 0, "missing checkpoint header");
  const std::uint64_t blob_at = line.size() + 1;
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
    if (h.at("format") != "cafe-checkpoint") throw ParseError(ParseErrorKind::kBadMagic, 0, "not a checkpoint");
    if (h.at("version") != 1) throw ParseError(ParseErrorKind::kBadVersion, 0, "checkpoint version");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrorKind::kBadHeader, 0, e.what());
  }

  NetworkShape shape;
  std::uint64_t seed = 0;
  std::string hash;
  nlohmann::json config;
  std::size_t num_params = 0;
  try {
    const auto widths = h.at("widths").get<std::vector<std::size_t>>();
    if (widths.size() < 2) throw ParseError(ParseErrorKind::kBadHeader, 0, "need at least two widths");
    shape.input_dim = widths.front();
    shape.hidden.assign(widths.begin() + 1, widths.end() - 1);
    shape.feature_dim = h.at("C").get<std::size_t>();
    shape.backbone_out = widths.back() == shape.feature_dim ? 0 : widths.back();
    shape.num_classes = h.at("L").get<std::size_t>();
    shape.fc_bias = h.at("fc_bias").get<bool>();
    shape.use_mask = h.at("use_mask").get<bool>();
    seed = h.at("seed").get<std::uint64_t>();
    hash = h.at("config_hash").get<std::string>();
    config = h.at("config");
    num_params = h.at("num_params").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseErrorKind::kBadHeader, 0, e.what());
  }

  if (config_hash(config) != hash) throw ParseError(ParseErrorKind::kBadHeader, 0, "config_hash mismatch");

  MaskNetwork net = MaskNetwork::zeros(shape);
  if (net.num_parameters() != num_params) {
    throw ParseError(ParseErrorKind::kBadHeader, 0, "num_params does not match the declared widths");
  }
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = num_params * sizeof(double);
  if (blob.size() < expected) {
    throw ParseError(ParseErrorKind::kTruncated, blob_at + blob.size(), "parameter blob");
  }
  if (blob.size() > expected) throw ParseError(ParseErrorKind::kTrailingBytes, blob_at + expected, "");
  auto params = net.mutable_parameters();
  std::memcpy(params.data(), blob.data(), expected);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params[i])) {
      throw ParseError(ParseErrorKind::kNonFinite, blob_at + i * sizeof(double), "parameter");
    }
  }
  return Checkpoint{std::move(net), std::move(config), std::move(hash), seed};
}

}  // namespace cafe
