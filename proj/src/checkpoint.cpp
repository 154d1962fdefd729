#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "msinet/errors.hpp"
#include "msinet/train.hpp"

namespace msinet {

namespace {

constexpr char kMagic[4] = {'N', 'N', 'C', 'K'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  // host is little-endian; raw copy matches the on-disk format
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) {
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "checkpoint file truncated");
  }
  return value;
}

}  // namespace

void write_checkpoint_raw(const std::filesystem::path& path,
                          const std::string& text,
                          const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os.write(kMagic, 4);
  write_le<uint16_t>(os, kVersion);
  write_le<uint32_t>(os, static_cast<uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_le<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    write_le<uint16_t>(os, static_cast<uint16_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    write_le<uint8_t>(os, 0);  // dtype f64
    write_le<uint8_t>(os, static_cast<uint8_t>(nt.tensor.rank()));
    for (int64_t d : nt.tensor.shape()) {
      write_le<uint64_t>(os, static_cast<uint64_t>(d));
    }
    os.write(reinterpret_cast<const char*>(nt.tensor.data()),
             static_cast<std::streamsize>(nt.tensor.numel() * sizeof(double)));
  }
  os.flush();
  if (!os) throw IoError("short write to checkpoint: " + path.string());
}

std::pair<std::string, std::vector<NamedTensor>> read_checkpoint_raw(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint: " + path.string());

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic,
                          "bad checkpoint magic in " + path.string());
  }
  const uint16_t version = read_le<uint16_t>(is);
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version " +
                              std::to_string(version));
  }
  const uint32_t text_len = read_le<uint32_t>(is);
  std::string text(text_len, '\0');
  is.read(text.data(), text_len);
  if (!is) {
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "checkpoint file truncated in descriptor");
  }
  const uint32_t count = read_le<uint32_t>(is);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = read_le<uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) {
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            "checkpoint file truncated in tensor name");
    }
    const uint8_t dtype = read_le<uint8_t>(is);
    if (dtype != 0) {
      throw CheckpointError(CheckpointError::Kind::BadData,
                            "unknown dtype code " + std::to_string(dtype));
    }
    const uint8_t rank = read_le<uint8_t>(is);
    std::vector<int64_t> shape(rank);
    for (uint8_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int64_t>(read_le<uint64_t>(is));
      if (shape[d] < 1) {
        throw CheckpointError(CheckpointError::Kind::BadData,
                              "invalid dimension in tensor " + name);
      }
    }
    const int64_t numel = Tensor::shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(numel));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!is) {
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            "checkpoint file truncated in tensor " + name);
    }
    tensors.push_back({std::move(name), Tensor(std::move(shape),
                                               std::move(data))});
  }
  return {std::move(text), std::move(tensors)};
}

void save_checkpoint(Model& model, const AdamState* state,
                     const TrainConfig& cfg,
                     const std::filesystem::path& path) {
  std::ostringstream text;
  text << model.descriptor_text;
  text << "rng=" << RngStream::kAlgorithm << '\n';
  text << "adam_t=" << (state != nullptr ? state->t : 0) << '\n';
  text << cfg.to_text("cfg.");

  std::vector<NamedTensor> tensors;
  auto params = model.parameters();
  for (const Parameter* p : params) {
    tensors.push_back({p->name, p->value});
  }
  for (const auto& [name, buf] : model.buffers()) {
    tensors.push_back({name, *buf});
  }
  if (state != nullptr && !state->empty()) {
    for (size_t i = 0; i < params.size(); ++i) {
      tensors.push_back({"adam.m." + params[i]->name, state->m[i]});
      tensors.push_back({"adam.v." + params[i]->name, state->v[i]});
    }
  }
  write_checkpoint_raw(path, text.str(), tensors);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto [text, tensors] = read_checkpoint_raw(path);

  LoadedCheckpoint out;
  int64_t adam_t = 0;
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "adam_t") {
        adam_t = std::stoll(value);
      } else if (key.rfind("cfg.", 0) == 0) {
        out.cfg.apply_kv(key.substr(4), value);
      }
    }
  }

  out.built = build_model(ArchDescriptor::from_text(text));
  Model& model = out.built.model;

  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.tensor;

  auto assign = [&](const std::string& name, Tensor& dst) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(CheckpointError::Kind::BadData,
                            "checkpoint missing tensor " + name);
    }
    if (it->second->shape() != dst.shape()) {
      throw CheckpointError(
          CheckpointError::Kind::ShapeMismatch,
          "tensor " + name + " has shape " + it->second->shape_str() +
              ", descriptor expects " + dst.shape_str());
    }
    dst = *it->second;
  };

  auto params = model.parameters();
  for (Parameter* p : params) assign(p->name, p->value);
  for (auto& [name, buf] : model.buffers()) assign(name, *buf);

  if (by_name.count("adam.m." + params.front()->name) != 0) {
    out.state = AdamState::init_like(params);
    out.state.t = adam_t;
    for (size_t i = 0; i < params.size(); ++i) {
      assign("adam.m." + params[i]->name, out.state.m[i]);
      assign("adam.v." + params[i]->name, out.state.v[i]);
    }
  }
  return out;
}

}  // namespace msinet
