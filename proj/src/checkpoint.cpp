#include "pct3d/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace pct3d {

namespace {

constexpr char kMagic[8] = {'3', 'D', 'P', 'C', 'T', '0', '0', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::ifstream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_f64(std::ifstream& in, double& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  std::memcpy(&v, &bits, 8);
  return true;
}

std::string shape_hint(const std::string& name) {
  if (name.rfind("head.out.", 0) == 0) return "; check num_classes";
  if (name.rfind("decoder.out.", 0) == 0) return "; check num_parts";
  return "";
}

}  // namespace

std::vector<CheckpointEntry> snapshot_entries(const ParamRegistry& reg) {
  std::vector<CheckpointEntry> out;
  out.reserve(reg.params.size() + 2 * reg.stats.size());
  for (const auto& [name, p] : reg.params) {
    out.push_back({name, p->shape(), p->values()});
  }
  for (const auto& [name, s] : reg.stats) {
    const int ch = static_cast<int>(s->running_mean.size());
    out.push_back({name + ".running_mean", {ch}, s->running_mean});
    out.push_back({name + ".running_var", {ch}, s->running_var});
  }
  return out;
}

void write_checkpoint(const std::string& path,
                      const std::vector<CheckpointEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValueError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(out, static_cast<std::uint32_t>(e.extents.size()));
    for (int ext : e.extents) put_u32(out, static_cast<std::uint32_t>(ext));
    for (double v : e.data) put_f64(out, v);
  }
  if (!out) throw ValueError("write failed for checkpoint '" + path + "'");
}

std::vector<CheckpointEntry> read_checkpoint_entries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValueError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ValueError("'" + path + "' is not a 3DPCT001 checkpoint");
  }
  std::vector<CheckpointEntry> out;
  std::uint32_t name_len;
  while (get_u32(in, name_len)) {
    CheckpointEntry e;
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) {
      throw ValueError("truncated checkpoint '" + path + "'");
    }
    std::uint32_t rank;
    if (!get_u32(in, rank)) throw ValueError("truncated checkpoint '" + path + "'");
    std::int64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t ext;
      if (!get_u32(in, ext)) throw ValueError("truncated checkpoint '" + path + "'");
      e.extents.push_back(static_cast<int>(ext));
      count *= ext;
    }
    e.data.resize(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      if (!get_f64(in, e.data[static_cast<std::size_t>(i)])) {
        throw ValueError("truncated checkpoint '" + path + "'");
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParamRegistry& reg) {
  write_checkpoint(path, snapshot_entries(reg));
}

void restore_entries(const std::vector<CheckpointEntry>& entries,
                     ParamRegistry& reg) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  std::size_t used = 0;

  auto take = [&](const std::string& name,
                  const std::vector<int>& shape) -> const CheckpointEntry* {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ConfigError("checkpoint is missing '" + name + "'" + shape_hint(name));
    }
    const CheckpointEntry* e = it->second;
    if (e->extents != shape) {
      throw ConfigError("checkpoint shape mismatch for '" + name + "': file has " +
                        shape_str(e->extents) + ", model expects " +
                        shape_str(shape) + shape_hint(name));
    }
    ++used;
    return e;
  };

  for (auto& [name, p] : reg.params) {
    p->values() = take(name, p->shape())->data;
  }
  for (auto& [name, s] : reg.stats) {
    const int ch = static_cast<int>(s->running_mean.size());
    s->running_mean = take(name + ".running_mean", {ch})->data;
    s->running_var = take(name + ".running_var", {ch})->data;
  }
  if (used != by_name.size()) {
    for (const auto& [name, e] : by_name) {
      bool known = false;
      for (auto& [rn, p] : reg.params) {
        if (rn == name) { known = true; break; }
      }
      for (auto& [rn, s] : reg.stats) {
        if (rn + ".running_mean" == name || rn + ".running_var" == name) {
          known = true;
          break;
        }
      }
      if (!known) {
        throw ConfigError("checkpoint has unexpected entry '" + name + "'" +
                          shape_hint(name));
      }
    }
  }
}

void load_checkpoint(const std::string& path, ParamRegistry& reg) {
  restore_entries(read_checkpoint_entries(path), reg);
}

}  // namespace pct3d
