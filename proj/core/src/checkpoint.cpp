#include "mmadapt/checkpoint.hpp"

#include <cstring>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mmadapt/binary_io.hpp"
#include "mmadapt/errors.hpp"
#include "mmadapt/rng.hpp"

namespace mmadapt {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'M', 'M', 'A', 'D', 'C', 'K', 'P', 'T'};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

json config_to_json(const SegNetConfig& c) {
  return {{"in_channels", c.in_channels},   {"base_channels", c.base_channels}, {"encoder_blocks", c.encoder_blocks},
          {"num_classes", c.num_classes},   {"aux_decoders", c.aux_decoders},   {"dropout_rate", c.dropout_rate},
          {"proj_channels", c.proj_channels}};
}

SegNetConfig config_from_json(const json& j) {
  SegNetConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.base_channels = j.at("base_channels").get<std::size_t>();
  c.encoder_blocks = j.at("encoder_blocks").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.aux_decoders = j.at("aux_decoders").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.proj_channels = j.at("proj_channels").get<std::size_t>();
  return c;
}

}  // namespace

std::uint64_t Checkpoint::fingerprint() const { return fnv1a(run_config); }

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  json manifest;
  manifest["format"] = "mmadapt-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["kind"] = ckpt.kind;
  manifest["seed"] = ckpt.seed;
  manifest["fingerprint"] = hex64(ckpt.fingerprint());
  manifest["run_config"] = ckpt.run_config;
  manifest["network"] = config_to_json(ckpt.net.config());
  manifest["class_binding"] = ckpt.net.class_binding();
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : ckpt.net.parameters()) {
    const Tensor& t = p.var.value();
    tensors.push_back({{"name", p.name}, {"shape", t.shape()}, {"dtype", "f64le"}, {"offset", offset}});
    offset += t.size() * 8;
  }
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  append_u64_le(out, kCheckpointVersion);
  append_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : ckpt.net.parameters()) append_f64_le(out, p.var.value().values());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw DataError(origin + ": not an mmadapt checkpoint");
  }
  const std::uint64_t version = read_u64_le(bytes.subspan(8, 8));
  if (version != kCheckpointVersion) {
    throw DataError(origin + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const std::uint64_t length = read_u64_le(bytes.subspan(16, 8));
  if (bytes.size() - 24 < length) throw DataError(origin + ": truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 24, bytes.begin() + 24 + static_cast<std::ptrdiff_t>(length));
  } catch (const json::exception& e) {
    throw DataError(origin + ": malformed manifest: " + e.what());
  }
  const auto payload = bytes.subspan(24 + length);

  Checkpoint ckpt;
  try {
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.run_config = manifest.at("run_config").get<std::string>();
    if (manifest.at("fingerprint").get<std::string>() != hex64(ckpt.fingerprint())) {
      throw DataError(origin + ": config fingerprint does not match the stored run config");
    }
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& t : manifest.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f64le") throw DataError(origin + ": unsupported dtype");
      const Shape shape = t.at("shape").get<Shape>();
      std::size_t count = 1;
      for (auto d : shape) count *= d;
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (offset > payload.size() || payload.size() - offset < count * 8) {
        throw DataError(origin + ": truncated payload at tensor " + t.at("name").get<std::string>());
      }
      tensors.emplace_back(t.at("name").get<std::string>(),
                           Tensor(shape, read_f64_le(payload.subspan(offset, count * 8))));
    }
    ckpt.net = SegNet::from_parameters(config_from_json(manifest.at("network")),
                                       manifest.at("class_binding").get<std::vector<int>>(), std::move(tensors));
  } catch (const json::exception& e) {
    throw DataError(origin + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(origin + ": " + e.what());
  } catch (const ShapeError& e) {
    throw DataError(origin + ": " + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("no checkpoint at " + path.string());
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace mmadapt
