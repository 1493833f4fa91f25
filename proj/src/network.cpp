#include "pct3d/network.hpp"

#include <chrono>

#include "pct3d/geometry.hpp"

namespace pct3d {

Tensor interpolate_stacked(const std::vector<PointMatrix>& target,
                           const std::vector<PointMatrix>& source,
                           const Tensor& source_feats) {
  const int batch = static_cast<int>(target.size());
  if (batch == 0 || source.size() != target.size()) {
    throw ContractError("interpolate_stacked: batch mismatch");
  }
  const int s = static_cast<int>(source[0].rows());
  if (source_feats.extent(0) != batch * s) {
    throw ShapeError("interpolate_stacked: stacked source rows mismatch");
  }
  std::int64_t t_total = 0;
  for (const auto& t : target) t_total += t.rows();

  std::vector<std::vector<int>> idx(3, std::vector<int>(t_total));
  std::vector<std::vector<double>> w(3, std::vector<double>(t_total));
  std::int64_t row = 0;
  for (int b = 0; b < batch; ++b) {
    const IdwWeights iw = idw_weights(target[b], source[b]);
    for (std::size_t i = 0; i < iw.idx.size(); ++i, ++row) {
      for (int j = 0; j < 3; ++j) {
        idx[j][row] = b * s + iw.idx[i][j];
        w[j][row] = iw.w[i][j];
      }
    }
  }
  Tensor acc;
  for (int j = 0; j < 3; ++j) {
    Tensor term =
        scale_rows(gather_rows(source_feats, std::move(idx[j])), std::move(w[j]));
    acc = j == 0 ? term : add(acc, term);
  }
  return acc;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();

  stem1_.emplace(cfg_.in_channels, cfg_.stem_width);
  stem2_.emplace(cfg_.stem_width, cfg_.stem_width);

  const std::vector<int> counts = cfg_.point_counts();
  int channels = cfg_.stem_width;
  for (std::size_t m = 0; m < cfg_.modules.size(); ++m) {
    Module mod{LfaBlock(channels, cfg_.modules[m].scales, cfg_.mlp_lfa), nullptr, 0};
    mod.width = mod.lfa.out_width();
    if (cfg_.use_gfl) {
      GflBlock::Options opt;
      opt.use_ppsa = cfg_.use_ppsa;
      opt.use_csa = cfg_.use_csa;
      opt.standard_psa = cfg_.standard_psa;
      opt.csa_mode = cfg_.csa_mode;
      opt.pos_hidden = cfg_.pos_hidden;
      mod.gfl = std::make_unique<GflBlock>(mod.width, counts[m + 1], opt);
    }
    channels = mod.width;
    modules_.push_back(std::move(mod));
  }

  if (cfg_.task == Task::kClassification) {
    head1_.emplace(cfg_.global_width(), cfg_.head_width1);
    head2_.emplace(cfg_.head_width1, cfg_.head_width2);
    head_out_.emplace(cfg_.head_width2, cfg_.num_classes);
  } else {
    // Feature-propagation stages run deepest to shallowest; the final stage
    // lands on the original points and owns a single LBR.
    int cur = modules_.back().width;
    const std::size_t n_stages = modules_.size();
    for (std::size_t st = 0; st < n_stages; ++st) {
      const bool final_stage = st + 1 == n_stages;
      const int skip_width = final_stage
                                 ? cfg_.stem_width
                                 : modules_[n_stages - 2 - st].width;
      const int out_w = cfg_.decoder_widths[st];
      FpStage stage{LbrLayer(cur + skip_width, out_w), std::nullopt};
      if (!final_stage) stage.l2.emplace(out_w, out_w);
      fp_stages_.push_back(std::move(stage));
      cur = out_w;
    }
    seg_out_.emplace(cur, cfg_.num_parts);
  }

  // Registration happens after all blocks exist: the registry stores raw
  // pointers, so the owning containers must not reallocate afterwards.
  stem1_->register_into(reg_, "stem.lbr1");
  stem2_->register_into(reg_, "stem.lbr2");
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    const std::string prefix = "module" + std::to_string(m + 1);
    modules_[m].lfa.register_into(reg_, prefix + ".lfa");
    if (modules_[m].gfl) modules_[m].gfl->register_into(reg_, prefix + ".gfl");
  }
  if (cfg_.task == Task::kClassification) {
    head1_->register_into(reg_, "head.lbr1");
    head2_->register_into(reg_, "head.lbr2");
    head_out_->register_into(reg_, "head.out");
  } else {
    for (std::size_t st = 0; st < fp_stages_.size(); ++st) {
      const std::string prefix = "decoder.stage" + std::to_string(st + 1);
      fp_stages_[st].l1.register_into(reg_, prefix + ".lbr1");
      if (fp_stages_[st].l2) fp_stages_[st].l2->register_into(reg_, prefix + ".lbr2");
    }
    seg_out_->register_into(reg_, "decoder.out");
  }
}

void Model::init_params(std::uint64_t seed) {
  RandomStream rng(seed);
  stem1_->init(rng);
  stem2_->init(rng);
  for (auto& m : modules_) {
    m.lfa.init(rng);
    if (m.gfl) m.gfl->init(rng);
  }
  if (head1_) {
    head1_->init(rng);
    head2_->init(rng);
    head_out_->init(rng);
  }
  for (auto& st : fp_stages_) {
    st.l1.init(rng);
    if (st.l2) st.l2->init(rng);
  }
  if (seg_out_) seg_out_->init(rng);
}

Tensor Model::input_features(const std::vector<const PointCloud*>& batch) const {
  const int n = cfg_.input_points;
  std::vector<double> data;
  data.reserve(batch.size() * static_cast<std::size_t>(n) * cfg_.in_channels);
  for (const PointCloud* pc : batch) {
    if (pc->point_count() != n) {
      throw ConfigError("sample has " + std::to_string(pc->point_count()) +
                        " points, config expects input_points=" + std::to_string(n));
    }
    if (cfg_.in_channels == 6 && !pc->has_normals()) {
      throw ConfigError("in_channels=6 but sample carries no normals");
    }
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) data.push_back(pc->coords(i, c));
      if (cfg_.in_channels == 6) {
        for (int c = 0; c < 3; ++c) data.push_back(pc->normals(i, c));
      }
    }
  }
  return Tensor::from_data(
      {static_cast<int>(batch.size()) * n, cfg_.in_channels}, std::move(data));
}

Tensor Model::stem_forward(const Tensor& x, ForwardCtx& ctx) {
  if (x.rank() != 2 || x.extent(1) != cfg_.in_channels) {
    throw ConfigError("stem: input channel count != in_channels");
  }
  return stem2_->forward(stem1_->forward(x, ctx), ctx);
}

EncoderOut Model::encode(const std::vector<const PointCloud*>& batch,
                         ForwardCtx& ctx) {
  if (batch.empty()) throw ValueError("encode: empty batch");
  EncoderOut out;
  out.batch = static_cast<int>(batch.size());
  out.input_coords.reserve(batch.size());
  for (const PointCloud* pc : batch) out.input_coords.push_back(pc->coords);

  Tensor x = input_features(batch);
  out.stem_features = stem_forward(x, ctx);

  Tensor feats = out.stem_features;
  const std::vector<PointMatrix>* coords = &out.input_coords;
  for (auto& m : modules_) {
    LfaResult lfa = m.lfa.forward(feats, *coords, ctx);
    Tensor f_out = m.gfl
                       ? m.gfl->forward(lfa.features, lfa.coords, lfa.scales, ctx)
                       : lfa.features;
    out.levels.push_back(
        {std::move(f_out), std::move(lfa.coords), lfa.s, m.width});
    feats = out.levels.back().features;
    coords = &out.levels.back().coords;
  }

  // Per-level global vectors: per-channel max over each sample's points.
  std::vector<Tensor> per_level;
  for (const auto& lvl : out.levels) {
    std::vector<Tensor> rows;
    rows.reserve(out.batch);
    for (int b = 0; b < out.batch; ++b) {
      Tensor fb = slice_rows(lvl.features, b * lvl.s, (b + 1) * lvl.s);
      rows.push_back(max_reduce(fb, 0));
    }
    per_level.push_back(rows.size() == 1 ? rows[0] : concat(rows, 0));
  }
  if (cfg_.multi_level_global) {
    out.global_feature =
        per_level.size() == 1 ? per_level[0] : concat(per_level, 1);
  } else {
    out.global_feature = per_level.back();
  }
  return out;
}

Tensor Model::classify(const EncoderOut& enc, ForwardCtx& ctx) {
  if (cfg_.task != Task::kClassification) {
    throw ContractError("classify called on a segmentation model");
  }
  Tensor h = head1_->forward(enc.global_feature, ctx);
  if (ctx.mode == RunMode::kTrain && ctx.rng && cfg_.dropout > 0.0) {
    h = dropout(h, cfg_.dropout, *ctx.rng);
  }
  h = head2_->forward(h, ctx);
  if (ctx.mode == RunMode::kTrain && ctx.rng && cfg_.dropout > 0.0) {
    h = dropout(h, cfg_.dropout, *ctx.rng);
  }
  return head_out_->forward(h, ctx);
}

Tensor Model::segment(const EncoderOut& enc, ForwardCtx& ctx) {
  if (cfg_.task != Task::kSegmentation) {
    throw ContractError("segment called on a classification model");
  }
  const std::size_t n_levels = enc.levels.size();
  Tensor cur = enc.levels.back().features;
  const std::vector<PointMatrix>* cur_coords = &enc.levels.back().coords;
  for (std::size_t st = 0; st < fp_stages_.size(); ++st) {
    const bool final_stage = st + 1 == fp_stages_.size();
    const std::vector<PointMatrix>& tgt =
        final_stage ? enc.input_coords : enc.levels[n_levels - 2 - st].coords;
    const Tensor& skip =
        final_stage ? enc.stem_features : enc.levels[n_levels - 2 - st].features;
    Tensor up = interpolate_stacked(tgt, *cur_coords, cur);
    Tensor h = fp_stages_[st].l1.forward(concat({up, skip}, 1), ctx);
    if (fp_stages_[st].l2) h = fp_stages_[st].l2->forward(h, ctx);
    cur = std::move(h);
    cur_coords = &tgt;
  }
  return seg_out_->forward(cur, ctx);
}

Tensor Model::forward(const std::vector<const PointCloud*>& batch,
                      ForwardCtx& ctx) {
  EncoderOut enc = encode(batch, ctx);
  return cfg_.task == Task::kClassification ? classify(enc, ctx)
                                            : segment(enc, ctx);
}

std::int64_t Model::param_count() const {
  std::int64_t total = 0;
  for (const auto& [name, p] : reg_.params) total += p->size();
  return total;
}

double Model::param_megabytes() const {
  return static_cast<double>(param_count()) * 4.0 / (1024.0 * 1024.0);
}

std::vector<Model::BenchEntry> Model::benchmark(const PointCloud& cloud,
                                                int repeats) {
  using Clock = std::chrono::steady_clock;
  std::vector<BenchEntry> entries;
  entries.push_back({"stem", 0.0});
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    entries.push_back({"module" + std::to_string(m + 1) + ".lfa", 0.0});
    if (modules_[m].gfl) {
      entries.push_back({"module" + std::to_string(m + 1) + ".gfl", 0.0});
    }
  }
  entries.push_back(
      {cfg_.task == Task::kClassification ? "head" : "decoder", 0.0});

  ForwardCtx ctx;  // inference: no tape
  const std::vector<const PointCloud*> batch{&cloud};
  for (int r = 0; r < repeats; ++r) {
    std::size_t e = 0;
    auto timed = [&](auto&& fn) {
      const auto t0 = Clock::now();
      fn();
      const auto t1 = Clock::now();
      entries[e++].total_ms +=
          std::chrono::duration<double, std::milli>(t1 - t0).count();
    };

    EncoderOut enc;
    enc.batch = 1;
    enc.input_coords.push_back(cloud.coords);
    Tensor x = input_features(batch);
    timed([&] { enc.stem_features = stem_forward(x, ctx); });
    Tensor feats = enc.stem_features;
    const std::vector<PointMatrix>* coords = &enc.input_coords;
    for (auto& m : modules_) {
      LfaResult lfa;
      timed([&] { lfa = m.lfa.forward(feats, *coords, ctx); });
      Tensor f_out;
      if (m.gfl) {
        timed([&] {
          f_out = m.gfl->forward(lfa.features, lfa.coords, lfa.scales, ctx);
        });
      } else {
        f_out = lfa.features;
      }
      enc.levels.push_back({std::move(f_out), std::move(lfa.coords), lfa.s, m.width});
      feats = enc.levels.back().features;
      coords = &enc.levels.back().coords;
    }
    std::vector<Tensor> per_level;
    for (const auto& lvl : enc.levels) per_level.push_back(max_reduce(lvl.features, 0));
    enc.global_feature = cfg_.multi_level_global
                             ? (per_level.size() == 1 ? per_level[0]
                                                      : concat(per_level, 1))
                             : per_level.back();
    timed([&] {
      if (cfg_.task == Task::kClassification) {
        classify(enc, ctx);
      } else {
        segment(enc, ctx);
      }
    });
  }
  return entries;
}

}  // namespace pct3d
