#include "mfsb/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace mfsb {

namespace {

constexpr char kMagic[8] = {'M', 'F', 'S', 'B', 'C', 'K', 'P', '1'};

template <typename T>
void put(std::string& buf, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (pos + sizeof(T) > buf.size())
    throw std::runtime_error("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void put_vec(std::string& buf, const Eigen::VectorXd& v) {
  put<std::uint64_t>(buf, std::uint64_t(v.size()));
  buf.append(reinterpret_cast<const char*>(v.data()),
             std::size_t(v.size()) * sizeof(double));
}

Eigen::VectorXd take_vec(const std::string& buf, std::size_t& pos) {
  const auto n = take<std::uint64_t>(buf, pos);
  if (pos + n * sizeof(double) > buf.size())
    throw std::runtime_error("checkpoint: truncated parameter block");
  const long count = long(n);
  Eigen::VectorXd v(count);
  std::memcpy(v.data(), buf.data() + pos, n * sizeof(double));
  pos += n * sizeof(double);
  return v;
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void save_checkpoint(const std::string& path, const NetBundle& nets,
                     const CheckpointMeta& meta) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, std::uint32_t(meta.dim));
  put<std::uint32_t>(buf, std::uint32_t(meta.hidden));
  put<std::uint64_t>(buf, meta.seed);
  put<std::int32_t>(buf, std::int32_t(meta.stage));
  put<std::uint32_t>(buf, std::uint32_t(meta.scenario.size()));
  buf.append(meta.scenario);
  const Mlp* ms[] = {&nets.z_fwd, &nets.z_bwd, &nets.y_fwd, &nets.y_bwd,
                     &nets.vel};
  for (const Mlp* m : ms) put_vec(buf, flatten(*m));
  const AdamState* as[] = {&nets.a_z_fwd, &nets.a_z_bwd, &nets.a_y_fwd,
                           &nets.a_y_bwd, &nets.a_vel};
  for (const AdamState* a : as) put<std::uint64_t>(buf, a->steps);
  put<std::uint64_t>(buf, fnv1a(buf.data(), buf.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw std::runtime_error("checkpoint: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointMeta load_checkpoint(const std::string& path, NetBundle& nets) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::size_t cpos = body;
  if (take<std::uint64_t>(buf, cpos) != fnv1a(buf.data(), body))
    throw std::runtime_error("checkpoint: checksum mismatch in " + path);

  std::size_t pos = sizeof(kMagic);
  CheckpointMeta meta;
  meta.dim = int(take<std::uint32_t>(buf, pos));
  meta.hidden = int(take<std::uint32_t>(buf, pos));
  meta.seed = take<std::uint64_t>(buf, pos);
  meta.stage = int(take<std::int32_t>(buf, pos));
  const auto label_len = take<std::uint32_t>(buf, pos);
  if (pos + label_len > body)
    throw std::runtime_error("checkpoint: truncated label");
  meta.scenario.assign(buf.data() + pos, label_len);
  pos += label_len;

  Rng rng(0);
  nets = NetBundle::init(meta.dim, meta.hidden, 1e-3, 0.9, 0.999, 1e-8, rng);
  Mlp* ms[] = {&nets.z_fwd, &nets.z_bwd, &nets.y_fwd, &nets.y_bwd, &nets.vel};
  for (Mlp* m : ms) {
    const Eigen::VectorXd v = take_vec(buf, pos);
    if (v.size() != m->param_count())
      throw std::runtime_error("checkpoint: parameter count mismatch");
    unflatten(v, *m);
  }
  AdamState* as[] = {&nets.a_z_fwd, &nets.a_z_bwd, &nets.a_y_fwd,
                     &nets.a_y_bwd, &nets.a_vel};
  for (AdamState* a : as) a->steps = take<std::uint64_t>(buf, pos);
  if (pos != body) throw std::runtime_error("checkpoint: trailing bytes");
  return meta;
}

}  // namespace mfsb
