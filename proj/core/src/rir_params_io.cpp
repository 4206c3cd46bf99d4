#include <array>
#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "dereverb/reverb_operator.hpp"

namespace dereverb::reverb {
namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s : {18, 12, 6, 0}) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kAlphabet[i])] = i;
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=' || ch == '\n' || ch == '\r') continue;
    const int v = lut[static_cast<unsigned char>(ch)];
    if (v < 0) throw ConfigError("rir params json: invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

void put_le(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xFF));
}

double get_le(const std::uint8_t* p) {
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace

std::string to_json(const RirParams& p) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(p.phases.size()) * 8);
  for (Eigen::Index i = 0; i < p.phases.size(); ++i) put_le(bytes, p.phases.data()[i]);  // row-major storage
  nlohmann::json j;
  j["band_centers"] = p.band_centers;
  j["w_db"] = p.weights_db;
  j["alpha"] = p.decays;
  j["n_frames"] = p.n_frames();
  j["bins"] = p.bins();
  j["phases"] = base64_encode(bytes);
  return j.dump(2);
}

RirParams from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rir params json: ") + e.what());
  }
  RirParams p;
  try {
    p.band_centers = j.at("band_centers").get<std::vector<double>>();
    p.weights_db = j.at("w_db").get<std::vector<double>>();
    p.decays = j.at("alpha").get<std::vector<double>>();
    const auto frames = j.at("n_frames").get<std::size_t>();
    const auto bytes = base64_decode(j.at("phases").get<std::string>());
    if (bytes.size() % 8 != 0 || frames == 0 || (bytes.size() / 8) % frames != 0)
      throw ConfigError("rir params json: phase payload does not match n_frames");
    const std::size_t bins = j.contains("bins") ? j.at("bins").get<std::size_t>() : bytes.size() / 8 / frames;
    if (bins * frames * 8 != bytes.size()) throw ConfigError("rir params json: phase payload does not match shape");
    p.phases.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(bins));
    for (std::size_t i = 0; i < frames * bins; ++i) p.phases.data()[i] = get_le(bytes.data() + 8 * i);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rir params json: ") + e.what());
  }
  if (p.weights_db.size() != p.decays.size() || p.band_centers.size() != p.decays.size())
    throw ConfigError("rir params json: band vectors differ in length");
  return p;
}

}  // namespace dereverb::reverb
