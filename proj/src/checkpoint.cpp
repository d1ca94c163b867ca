#include "dmdd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

namespace dmdd {

namespace {

constexpr const char* kMagic = "dmdd-score-checkpoint";

std::vector<unsigned char> encode_params(const Eigen::VectorXf& p) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(p.size()) * 4);
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    std::uint32_t w;
    std::memcpy(&w, &p[k], 4);
    if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap32(w);
    std::memcpy(bytes.data() + 4 * k, &w, 4);
  }
  return bytes;
}

std::uint32_t crc_of(const std::vector<unsigned char>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths, so feed large payloads in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const ConvScoreNet& net, const std::string& path) {
  const auto bytes = encode_params(net.net().params());
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : net.net().tensors())
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  const auto& s = net.schedule();
  nlohmann::json header = {
      {"format", kMagic},
      {"version", kCheckpointFormatVersion},
      {"architecture", net.spec().to_json()},
      {"schedule", {{"n_steps", s.n_steps}, {"rate_min", s.rate_min}, {"rate_max", s.rate_max}}},
      {"training", net.training_meta},
      {"tensors", tensors},
      {"num_params", net.net().num_params()},
      {"dtype", "float32-le"},
      {"crc32", crc_of(bytes)}};

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp + " for writing");
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write to " + tmp + " failed");
  }
  std::filesystem::rename(tmp, path);
}

ConvScoreNet load_checkpoint(const std::string& path, Eigen::Index expected_length) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingPath, "cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::TruncatedPayload, "checkpoint header missing");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Integrity, std::string("malformed checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != kMagic)
    throw Error(ErrorCode::Integrity, "not a score checkpoint: " + path);
  if (header.value("version", -1) != kCheckpointFormatVersion)
    throw Error(ErrorCode::VersionMismatch, "unsupported checkpoint version");

  const UNetSpec spec = UNetSpec::from_json(header.at("architecture"));
  if (expected_length > 0 && spec.length != expected_length)
    throw Error(ErrorCode::ArchitectureMismatch,
                "checkpoint is for N=" + std::to_string(spec.length) + ", expected N=" +
                    std::to_string(expected_length));
  const auto& sj = header.at("schedule");
  ConvScoreNet net(spec, make_vp_schedule(sj.at("n_steps").get<int>(), sj.at("rate_min").get<double>(),
                                          sj.at("rate_max").get<double>()));
  net.training_meta = header.value("training", nlohmann::json::object());
  if (header.at("num_params").get<Eigen::Index>() != net.net().num_params())
    throw Error(ErrorCode::ArchitectureMismatch, "parameter count does not match the architecture");
  const auto& tensors = header.at("tensors");
  if (tensors.size() != net.net().tensors().size())
    throw Error(ErrorCode::ArchitectureMismatch, "tensor table does not match the architecture");
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto& want = net.net().tensors()[k];
    if (tensors[k].at("name") != want.name ||
        tensors[k].at("shape").get<std::vector<Eigen::Index>>() != want.shape ||
        tensors[k].at("offset").get<Eigen::Index>() != want.offset)
      throw Error(ErrorCode::ArchitectureMismatch, "tensor " + want.name + " does not match");
  }

  const std::size_t n_bytes = static_cast<std::size_t>(net.net().num_params()) * 4;
  std::vector<unsigned char> bytes(n_bytes);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n_bytes));
  if (static_cast<std::size_t>(in.gcount()) != n_bytes)
    throw Error(ErrorCode::TruncatedPayload, "checkpoint payload is truncated");
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorCode::Integrity, "trailing bytes after checkpoint payload");
  if (crc_of(bytes) != header.at("crc32").get<std::uint32_t>())
    throw Error(ErrorCode::Checksum, "checkpoint payload fails its CRC32 check");

  auto& p = net.net().params();
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + 4 * k, 4);
    if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap32(w);
    std::memcpy(&p[k], &w, 4);
  }
  return net;
}

}  // namespace dmdd
