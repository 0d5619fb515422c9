#include "mbgen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mbgen {

namespace {
constexpr char kMagic[4] = {'M', 'B', 'G', 'N'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& buf, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(buf, v);
}

void put_str(std::string& buf, const std::string& s) {
  put_u64(buf, s.size());
  buf += s;
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::string& origin;

  void need(std::size_t n) {
    if (pos + n > buf.size())
      throw std::runtime_error("checkpoint " + origin + ": truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::uint64_t fnv1a64(const char* data, std::size_t len) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001B3ull;
  }
  return h;
}
}  // namespace

void Checkpoint::add_params(const ParamStore& store) {
  for (const Parameter* p : store.all()) tensors.emplace_back(p->name, p->value);
}

void Checkpoint::add_tensor(std::string name, Tensor t) {
  tensors.emplace_back(std::move(name), std::move(t));
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void Checkpoint::apply_to(ParamStore& store) const {
  for (Parameter* p : store.all()) {
    const Tensor* t = find(p->name);
    if (!t)
      throw std::runtime_error("checkpoint load: missing tensor '" + p->name + "'");
    if (t->shape != p->value.shape)
      throw std::runtime_error("checkpoint load: tensor '" + p->name + "' has shape " +
                               shape_str(t->shape) + ", model expects " +
                               shape_str(p->value.shape));
    p->value.data = t->data;
    p->zero_grad();
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, Checkpoint::kVersion);
  put_str(buf, ck.stage);
  put_str(buf, ck.config_echo);
  put_u64(buf, ck.rng_seed);
  put_u64(buf, ck.rng_counter);
  put_u64(buf, ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    put_str(buf, name);
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape) put_u64(buf, e);
    for (double d : t.data) put_f64(buf, d);
  }
  put_u64(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 12 + 8) throw std::runtime_error("checkpoint " + path + ": truncated file");
  const std::uint64_t stored = [&] {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[buf.size() - 8 + i]))
           << (8 * i);
    return v;
  }();
  if (fnv1a64(buf.data(), buf.size() - 8) != stored)
    throw std::runtime_error("checkpoint " + path + ": checksum mismatch (corrupt file)");

  Reader r{buf, 0, path};
  r.need(4);
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("checkpoint " + path + ": bad magic");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                             std::to_string(version));
  Checkpoint ck;
  ck.stage = r.str();
  ck.config_echo = r.str();
  ck.rng_seed = r.u64();
  ck.rng_counter = r.u64();
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = r.u64();
    Tensor t(shape);
    for (std::size_t e = 0; e < t.size(); ++e) t.data[e] = r.f64();
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace mbgen
