#include "timecast/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "timecast/errors.hpp"

namespace timecast::nn {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& is) {
  const std::uint32_t v = get_u32(is);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) {
    throw Error(errtag::kCheckpoint, "parameter name too long: " + name);
  }
  put_u16(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  const Shape& shape = t.shape();
  if (shape.size() > 0xff) {
    throw Error(errtag::kCheckpoint, "rank too large for " + name);
  }
  os.put(static_cast<char>(shape.size()));
  for (std::int64_t e : shape) put_u32(os, static_cast<std::uint32_t>(e));
  for (float v : t.data()) put_f32(os, v);
}

CheckpointEntry read_entry(std::istream& is) {
  CheckpointEntry entry;
  const std::uint16_t len = get_u16(is);
  entry.name.resize(len);
  is.read(entry.name.data(), len);
  const int rank = is.get();
  if (rank < 0) throw Error(errtag::kCheckpoint, "truncated checkpoint");
  Shape shape;
  for (int i = 0; i < rank; ++i) shape.push_back(get_u32(is));
  const std::int64_t n = shape_numel(shape);
  std::vector<float> data(static_cast<std::size_t>(n));
  for (float& v : data) v = get_f32(is);
  if (!is.good()) throw Error(errtag::kCheckpoint, "truncated checkpoint");
  entry.tensor = Tensor::from_data(std::move(shape), std::move(data));
  return entry;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamRefs& params,
                     const AdamW* optimizer) {
  check_unique_names(params);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(errtag::kIo, "cannot open " + path.string() + " for writing");
  os.write("TCK1", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) write_entry(os, p->name, p->tensor);
  if (optimizer) {
    os.write("STATE", 5);
    put_u32(os, static_cast<std::uint32_t>(1 + 2 * params.size()));
    write_entry(os, "step",
                Tensor::scalar(static_cast<float>(optimizer->step_count())));
    auto& m = const_cast<AdamW*>(optimizer)->first_moments();
    auto& v = const_cast<AdamW*>(optimizer)->second_moments();
    for (std::size_t i = 0; i < params.size(); ++i) {
      write_entry(os, "m." + params[i]->name, m[i]);
      write_entry(os, "v." + params[i]->name, v[i]);
    }
  }
  if (!os.good()) throw Error(errtag::kIo, "write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(errtag::kCheckpoint, "cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is.good() || std::memcmp(magic, "TCK1", 4) != 0) {
    throw Error(errtag::kCheckpoint, "bad magic in " + path.string());
  }
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion) {
    throw Error(errtag::kCheckpoint,
                "unsupported checkpoint version " + std::to_string(version));
  }
  LoadedCheckpoint out;
  const std::uint32_t count = get_u32(is);
  out.params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) out.params.push_back(read_entry(is));

  char sentinel[5];
  is.read(sentinel, 5);
  if (is.gcount() == 5 && std::memcmp(sentinel, "STATE", 5) == 0) {
    out.has_state = true;
    const std::uint32_t n = get_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) out.state.push_back(read_entry(is));
  }
  return out;
}

void bind_parameters(const LoadedCheckpoint& ckpt, const ParamRefs& params) {
  if (ckpt.params.size() != params.size()) {
    throw Error(errtag::kCheckpoint,
                "checkpoint has " + std::to_string(ckpt.params.size()) +
                    " parameters, model expects " + std::to_string(params.size()));
  }
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const CheckpointEntry& e : ckpt.params) by_name[e.name] = &e;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw Error(errtag::kCheckpoint, "checkpoint missing parameter " + p->name);
    }
    const Tensor& src = it->second->tensor;
    if (src.shape() != p->tensor.shape()) {
      throw Error(errtag::kCheckpoint,
                  "shape mismatch for " + p->name + ": checkpoint " +
                      shape_str(src.shape()) + " vs model " +
                      shape_str(p->tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), p->tensor.data().begin());
  }
}

void bind_optimizer(const LoadedCheckpoint& ckpt, AdamW& optimizer,
                    const ParamRefs& params) {
  if (!ckpt.has_state) {
    throw Error(errtag::kCheckpoint, "checkpoint carries no optimizer state");
  }
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const CheckpointEntry& e : ckpt.state) by_name[e.name] = &e;
  auto fetch = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw Error(errtag::kCheckpoint, "optimizer state missing " + name);
    }
    return it->second->tensor;
  };
  optimizer.set_step_count(static_cast<std::int64_t>(fetch("step").item()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& m = fetch("m." + params[i]->name);
    const Tensor& v = fetch("v." + params[i]->name);
    if (m.shape() != params[i]->tensor.shape() ||
        v.shape() != params[i]->tensor.shape()) {
      throw Error(errtag::kCheckpoint,
                  "optimizer moment shape mismatch for " + params[i]->name);
    }
    optimizer.first_moments()[i] = m.clone();
    optimizer.second_moments()[i] = v.clone();
  }
}

std::string file_content_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(errtag::kIo, "cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (is.eof()) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

}  // namespace timecast::nn
