#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ccfpse/trainer.hpp"

namespace ccfpse {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'C', 'F', 'P'};

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

void collect_store(const ParamStore<float>& store, const std::string& prefix, std::vector<NamedTensor>& out) {
  for (const auto& p : store.params()) out.push_back({prefix + "/" + p.name, p.tensor});
  for (const auto& b : store.buffers()) out.push_back({prefix + "/" + b.name, b.tensor});
}

void collect_adam(const ParamStore<float>& store, const AdamState<float>& adam, const std::string& prefix,
                  std::vector<NamedTensor>& out) {
  const auto& params = store.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({"adam/" + prefix + "/m/" + params[i].name, adam.m[i]});
    out.push_back({"adam/" + prefix + "/v/" + params[i].name, adam.v[i]});
  }
}

// Every tensor that belongs in a checkpoint, sorted by name.
std::vector<NamedTensor> checkpoint_tensors(const TrainState& s) {
  std::vector<NamedTensor> out;
  collect_store(s.generator.params(), "generator", out);
  collect_store(s.weight_net.params(), "weight_net", out);
  collect_store(s.discriminator.params(), "discriminator", out);
  collect_adam(s.generator.params(), s.opt_generator, "generator", out);
  collect_adam(s.weight_net.params(), s.opt_weight_net, "weight_net", out);
  collect_adam(s.discriminator.params(), s.opt_discriminator, "discriminator", out);
  std::sort(out.begin(), out.end(), [](const NamedTensor& a, const NamedTensor& b) { return a.name < b.name; });
  return out;
}

template <typename V>
void put_le(std::string& buf, V value) {
  char bytes[sizeof(V)];
  std::memcpy(bytes, &value, sizeof(V));
  buf.append(bytes, sizeof(V));
}

template <typename V>
V get_le(const char* p) {
  V value;
  std::memcpy(&value, p, sizeof(V));
  return value;
}

std::string rng_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& path) {
  const auto tensors = checkpoint_tensors(state);
  json meta;
  meta["version"] = kCheckpointVersion;
  meta["step"] = state.step;
  meta["config"] = to_json(state.config);
  meta["rng"] = rng_string(state.rng);
  meta["adam_steps"] = {{"generator", state.opt_generator.step},
                        {"weight_net", state.opt_weight_net.step},
                        {"discriminator", state.opt_discriminator.step}};
  json index = json::object();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    index[t.name] = {{"shape", t.tensor.shape()}, {"dtype", "f32"}, {"offset", offset}};
    offset += static_cast<std::uint64_t>(t.tensor.numel()) * sizeof(float);
  }
  meta["tensors"] = std::move(index);
  const std::string text = meta.dump();

  std::string buf(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(buf, kCheckpointVersion);
  put_le<std::uint64_t>(buf, text.size());
  buf += text;
  for (const auto& t : tensors) {
    const auto d = t.tensor.data();
    buf.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(float));
  }

  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  // Write to a sibling and rename so a crash never leaves a half-written file.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

std::unique_ptr<TrainState> load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  if (buf.size() < kHeader) throw IoError(path.string() + ": truncated header");
  const auto version = get_le<std::uint32_t>(buf.data() + 4);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto meta_len = get_le<std::uint64_t>(buf.data() + 8);
  if (meta_len > buf.size() - kHeader) throw IoError(path.string() + ": truncated metadata");

  json meta;
  try {
    meta = json::parse(buf.begin() + static_cast<std::ptrdiff_t>(kHeader),
                       buf.begin() + static_cast<std::ptrdiff_t>(kHeader + meta_len));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": corrupt metadata: " + e.what());
  }
  const std::size_t payload = kHeader + meta_len;
  const std::size_t payload_size = buf.size() - payload;

  std::unique_ptr<TrainState> state;
  try {
    state = std::make_unique<TrainState>(config_from_json(meta.at("config")));
    state->step = meta.at("step").get<std::int64_t>();
    std::istringstream rs(meta.at("rng").get<std::string>());
    rs >> state->rng;
    if (!rs) throw FormatError(path.string() + ": corrupt generator state");
    const auto& steps = meta.at("adam_steps");
    state->opt_generator.step = steps.at("generator").get<std::int64_t>();
    state->opt_weight_net.step = steps.at("weight_net").get<std::int64_t>();
    state->opt_discriminator.step = steps.at("discriminator").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": incomplete metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": invalid stored config: " + e.what());
  }

  const auto& index = meta.contains("tensors") ? meta.at("tensors") : json::object();
  const auto tensors = checkpoint_tensors(*state);
  if (index.size() != tensors.size()) {
    throw FormatError(path.string() + ": expected " + std::to_string(tensors.size()) + " tensors, found " +
                      std::to_string(index.size()));
  }
  for (const auto& t : tensors) {
    if (!index.contains(t.name)) throw FormatError(path.string() + ": missing tensor " + t.name);
    const auto& entry = index.at(t.name);
    Shape shape;
    std::uint64_t offset = 0;
    try {
      shape = entry.at("shape").get<Shape>();
      offset = entry.at("offset").get<std::uint64_t>();
      if (entry.at("dtype").get<std::string>() != "f32") throw FormatError(path.string() + ": " + t.name + " is not f32");
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": bad entry for " + t.name + ": " + e.what());
    }
    if (shape != t.tensor.shape()) {
      throw FormatError(path.string() + ": " + t.name + " has shape " + shape_string(shape) + ", expected " +
                        shape_string(t.tensor.shape()));
    }
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.tensor.numel()) * sizeof(float);
    if (offset > payload_size || bytes > payload_size - offset) {
      throw IoError(path.string() + ": truncated payload for " + t.name);
    }
    auto dst = t.tensor.mutable_data();
    std::memcpy(dst.data(), buf.data() + payload + offset, bytes);
  }
  return state;
}

}  // namespace ccfpse
