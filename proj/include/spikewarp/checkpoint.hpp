#pragma once

// Checkpoint container: a little-endian binary file holding a JSON metadata
// record followed by named float64 tensors.
//
// Layout:
//   8 bytes   magic "SWCP0001"
//   u64       metadata byte count, then that many JSON bytes
//   u32       tensor count
//   per tensor: u16 name length, name bytes, u8 rank, i64 dims..., f64 data
// All integers and floats little-endian. Tensors are stored in float64
// regardless of the in-memory scalar type.

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "spikewarp/unet.hpp"

namespace spikewarp {

inline nlohmann::json spec_to_json(const NetworkSpec& s) {
  return nlohmann::json{{"encoder_channels", s.encoder_channels},
                        {"decoder_channels", s.decoder_channels},
                        {"input_channels", s.input_channels},
                        {"output_channels", s.output_channels},
                        {"kernel", s.kernel},
                        {"timesteps", s.timesteps},
                        {"smoothing_kernel", s.smoothing_kernel},
                        {"velocity_mode", s.velocity_mode},
                        {"svf_squarings", s.svf_squarings},
                        {"bn_momentum", s.bn_momentum},
                        {"bn_eps", s.bn_eps},
                        {"surrogate_alpha", s.surrogate_alpha},
                        {"tau_hi", s.tau_hi},
                        {"tau_lo", s.tau_lo}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.encoder_channels = j.at("encoder_channels").get<std::vector<std::int64_t>>();
  s.decoder_channels = j.at("decoder_channels").get<std::vector<std::int64_t>>();
  s.input_channels = j.at("input_channels").get<std::int64_t>();
  s.output_channels = j.at("output_channels").get<std::int64_t>();
  s.kernel = j.at("kernel").get<std::int64_t>();
  s.timesteps = j.at("timesteps").get<std::int64_t>();
  s.smoothing_kernel = j.at("smoothing_kernel").get<std::int64_t>();
  s.velocity_mode = j.at("velocity_mode").get<bool>();
  s.svf_squarings = j.at("svf_squarings").get<int>();
  s.bn_momentum = j.at("bn_momentum").get<double>();
  s.bn_eps = j.at("bn_eps").get<double>();
  s.surrogate_alpha = j.at("surrogate_alpha").get<double>();
  s.tau_hi = j.at("tau_hi").get<double>();
  s.tau_lo = j.at("tau_lo").get<double>();
  return s;
}

inline std::uint64_t spec_hash(const NetworkSpec& s) {
  return std::hash<std::string>{}(spec_to_json(s).dump());
}

namespace ckpt_detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace ckpt_detail

constexpr char kCheckpointMagic[8] = {'S', 'W', 'C', 'P', '0', '0', '0', '1'};

template <class T>
void save_checkpoint(Network<T>& net, const std::string& path, const std::string& phase,
                     std::uint64_t seed) {
  nlohmann::json meta{{"spec", spec_to_json(net.spec)},
                      {"spec_hash", spec_hash(net.spec)},
                      {"flavor", net.flavor == Flavor::ann ? "ann" : "snn"},
                      {"phase", phase},
                      {"seed", seed},
                      {"bn_frozen", net.bn_frozen}};
  const std::string mjson = meta.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(kCheckpointMagic, 8);
  ckpt_detail::put<std::uint64_t>(os, mjson.size());
  os.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  auto tensors = network_tensors(net);
  ckpt_detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (auto& nt : tensors) {
    ckpt_detail::put<std::uint16_t>(os, static_cast<std::uint16_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    ckpt_detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(nt.t->shape.size()));
    for (auto d : nt.t->shape) ckpt_detail::put<std::int64_t>(os, d);
    for (T v : nt.t->data) ckpt_detail::put<double>(os, static_cast<double>(v));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

struct CheckpointMeta {
  std::string flavor, phase;
  std::uint64_t seed = 0;
  bool bn_frozen = false;
};

template <class T>
Network<T> load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto mlen = ckpt_detail::get<std::uint64_t>(is);
  std::string mjson(mlen, '\0');
  is.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw std::runtime_error("checkpoint: truncated metadata in " + path);
  nlohmann::json meta = nlohmann::json::parse(mjson);
  NetworkSpec spec = spec_from_json(meta.at("spec"));
  if (meta.at("spec_hash").get<std::uint64_t>() != spec_hash(spec))
    throw std::runtime_error("checkpoint: spec hash mismatch in " + path);
  const Flavor flavor = meta.at("flavor").get<std::string>() == "snn" ? Flavor::snn : Flavor::ann;

  std::mt19937_64 rng(0);
  Network<T> net = build_network<T>(spec, flavor, rng);
  net.bn_frozen = meta.value("bn_frozen", false);
  auto tensors = network_tensors(net);
  const auto count = ckpt_detail::get<std::uint32_t>(is);
  if (count != tensors.size())
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);
  for (auto& nt : tensors) {
    const auto nlen = ckpt_detail::get<std::uint16_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (name != nt.name)
      throw std::runtime_error("checkpoint: expected tensor " + nt.name + ", found " + name);
    const auto rank = ckpt_detail::get<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = ckpt_detail::get<std::int64_t>(is);
    if (shape != nt.t->shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (auto& v : nt.t->data) v = static_cast<T>(ckpt_detail::get<double>(is));
  }
  if (meta_out) {
    meta_out->flavor = meta.at("flavor").get<std::string>();
    meta_out->phase = meta.at("phase").get<std::string>();
    meta_out->seed = meta.at("seed").get<std::uint64_t>();
    meta_out->bn_frozen = net.bn_frozen;
  }
  return net;
}

}  // namespace spikewarp
