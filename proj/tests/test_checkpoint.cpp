#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pct3d/checkpoint.hpp"
#include "pct3d/network.hpp"
#include "support/test_util.hpp"

using namespace pct3d;
using namespace pct3d::testutil;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "pct3d_ckpt";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("checkpoint: save/load round-trips parameters and statistics") {
  ModelConfig cfg = ModelConfig::toy_classification();
  Model a(cfg);
  a.init_params(91);
  // make running stats non-trivial
  for (auto& [name, s] : a.registry().stats) {
    for (std::size_t i = 0; i < s->running_mean.size(); ++i) {
      s->running_mean[i] = 0.01 * static_cast<double>(i + 1);
      s->running_var[i] = 1.0 + 0.1 * static_cast<double>(i);
    }
  }
  const auto path = tmp("roundtrip.ckpt").string();
  save_checkpoint(path, a.registry());

  Model b(cfg);
  b.init_params(92);  // different values before loading
  load_checkpoint(path, b.registry());
  for (std::size_t i = 0; i < a.registry().params.size(); ++i) {
    CHECK(a.registry().params[i].second->values() ==
          b.registry().params[i].second->values());
  }
  for (std::size_t i = 0; i < a.registry().stats.size(); ++i) {
    CHECK(a.registry().stats[i].second->running_mean ==
          b.registry().stats[i].second->running_mean);
    CHECK(a.registry().stats[i].second->running_var ==
          b.registry().stats[i].second->running_var);
  }
}

TEST_CASE("checkpoint: head mismatch names num_classes") {
  ModelConfig cfg = ModelConfig::toy_classification();
  Model a(cfg);
  a.init_params(93);
  const auto path = tmp("head.ckpt").string();
  save_checkpoint(path, a.registry());

  ModelConfig other = cfg;
  other.num_classes = 7;
  Model b(other);
  try {
    load_checkpoint(path, b.registry());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("num_classes") != std::string::npos);
  }
}

TEST_CASE("checkpoint: bad magic and truncation are rejected") {
  const auto bad = tmp("bad.ckpt").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "NOTMAGIC snip";
  }
  CHECK_THROWS_AS(read_checkpoint_entries(bad), ValueError);

  ModelConfig cfg = ModelConfig::toy_classification();
  Model a(cfg);
  a.init_params(94);
  const auto path = tmp("trunc.ckpt").string();
  save_checkpoint(path, a.registry());
  const auto full_size = fs::file_size(path);
  fs::resize_file(path, full_size - 13);
  CHECK_THROWS_AS(read_checkpoint_entries(path), ValueError);
}

TEST_CASE("checkpoint: running statistics use the documented suffixes") {
  ModelConfig cfg = ModelConfig::toy_classification();
  Model a(cfg);
  a.init_params(95);
  const auto entries = snapshot_entries(a.registry());
  int mean_entries = 0, var_entries = 0;
  for (const auto& e : entries) {
    if (e.name.find(".running_mean") != std::string::npos) ++mean_entries;
    if (e.name.find(".running_var") != std::string::npos) ++var_entries;
  }
  CHECK(mean_entries == static_cast<int>(a.registry().stats.size()));
  CHECK(var_entries == mean_entries);
}
