#include "poseref/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace poseref {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'O', 'S', 'E', 'R', 'E', 'F', '1'};

json config_to_json(const RefinerConfig& c) {
  return json{{"frames", c.frames},
              {"joints", c.joints},
              {"in_channels", c.in_channels},
              {"hidden", c.hidden},
              {"layers", c.layers},
              {"temporal_kernel", c.temporal_kernel},
              {"use_nonlocal", c.use_nonlocal},
              {"residual_output", c.residual_output}};
}

RefinerConfig config_from_json(const json& j) {
  RefinerConfig c;
  c.frames = j.at("frames").get<int>();
  c.joints = j.at("joints").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.at("layers").get<int>();
  c.temporal_kernel = j.at("temporal_kernel").get<int>();
  c.use_nonlocal = j.at("use_nonlocal").get<bool>();
  c.residual_output = j.at("residual_output").get<bool>();
  return c;
}

void append_f32(std::vector<char>& out, const std::vector<double>& values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * sizeof(float));
  float* dst = reinterpret_cast<float*>(out.data() + at);
  for (std::size_t i = 0; i < values.size(); ++i)
    dst[i] = static_cast<float>(values[i]);
}

}  // namespace

void save_checkpoint(const RefinerModel& model, const std::filesystem::path& path,
                     const CheckpointInfo& info) {
  json header;
  header["format"] = 1;
  header["config"] = config_to_json(model.config());
  header["topology"] = topology_to_text(model.topology());
  header["seed"] = info.seed;
  header["init_seed"] = model.init_seed();
  header["epoch"] = info.epoch;
  header["extra"] = info.extra;

  std::vector<char> blobs;
  json params = json::array();
  for (const auto& [name, t] : model.named_parameters()) {
    params.push_back({{"name", name}, {"shape", t.shape()}});
    append_f32(blobs, t.values());
  }
  header["params"] = params;

  json buffers = json::array();
  for (const auto& [name, vec] : model.named_buffers()) {
    buffers.push_back({{"name", name}, {"size", vec->size()}});
    append_f32(blobs, *vec);
  }
  header["buffers"] = buffers;

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = header_text.size();
  char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<char>((len >> (8 * i)) & 0xff);
  out.write(len_bytes, 8);
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  out.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path.string() + " is not a model checkpoint");
  char len_bytes[8];
  in.read(len_bytes, 8);
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(len_bytes[i])) << (8 * i);
  if (len > (1ull << 30))
    throw std::runtime_error("implausible header size in " + path.string());
  std::string header_text(len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header in " + path.string());

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint header in " + path.string() + ": " +
                             e.what());
  }

  try {
    const RefinerConfig config = config_from_json(header.at("config"));
    const SkeletonTopology topo = topology_from_text(
        header.at("topology").get<std::string>(), path.string() + "#topology");
    const std::uint64_t init_seed = header.value("init_seed", std::uint64_t{0});

    LoadedCheckpoint loaded{RefinerModel(config, topo, init_seed), CheckpointInfo{}};
    loaded.info.seed = header.at("seed").get<std::uint64_t>();
    loaded.info.epoch = header.at("epoch").get<int>();
    if (header.contains("extra"))
      loaded.info.extra = header.at("extra").get<std::map<std::string, std::string>>();

    auto read_f32 = [&](std::size_t count, const std::string& what) {
      std::vector<float> raw(count);
      in.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
      if (!in)
        throw std::runtime_error("checkpoint " + path.string() + " is missing data for " +
                                 what);
      return raw;
    };

    auto params = loaded.model.named_parameters();
    const auto& param_entries = header.at("params");
    if (param_entries.size() != params.size())
      throw std::runtime_error("checkpoint " + path.string() + " holds " +
                               std::to_string(param_entries.size()) +
                               " parameters, the model built from its config has " +
                               std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& entry = param_entries.at(i);
      auto& [name, tensor] = params[i];
      if (entry.at("name").get<std::string>() != name)
        throw std::runtime_error("checkpoint " + path.string() + " parameter " +
                                 std::to_string(i) + " is named '" +
                                 entry.at("name").get<std::string>() + "', expected '" +
                                 name + "'");
      const auto shape = entry.at("shape").get<Shape>();
      if (shape != tensor.shape())
        throw std::runtime_error("checkpoint " + path.string() + " parameter " + name +
                                 " has shape " + shape_str(shape) + ", expected " +
                                 shape_str(tensor.shape()));
      const auto raw = read_f32(tensor.numel(), name);
      for (std::size_t k = 0; k < raw.size(); ++k)
        tensor.values()[k] = static_cast<double>(raw[k]);
    }

    auto buffers = loaded.model.named_buffers();
    const auto& buffer_entries = header.at("buffers");
    if (buffer_entries.size() != buffers.size())
      throw std::runtime_error("checkpoint " + path.string() +
                               " buffer list does not match the model");
    for (std::size_t i = 0; i < buffers.size(); ++i) {
      const auto& entry = buffer_entries.at(i);
      auto& [name, vec] = buffers[i];
      if (entry.at("name").get<std::string>() != name)
        throw std::runtime_error("checkpoint " + path.string() + " buffer " +
                                 std::to_string(i) + " is named '" +
                                 entry.at("name").get<std::string>() + "', expected '" +
                                 name + "'");
      if (entry.at("size").get<std::size_t>() != vec->size())
        throw std::runtime_error("checkpoint " + path.string() + " buffer " + name +
                                 " size mismatch");
      const auto raw = read_f32(vec->size(), name);
      for (std::size_t k = 0; k < raw.size(); ++k) (*vec)[k] = static_cast<double>(raw[k]);
    }
    return loaded;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint header in " + path.string() + ": " +
                             e.what());
  }
}

}  // namespace poseref
