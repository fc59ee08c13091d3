#pragma once

// Two-stage training:
//   stage 1  learns consistent encoders/decoders and the shared classifier on
//            feature-masked inputs (masked BCE + cross-view prediction +
//            semantic contrastive);
//   stage 2  freezes those groups and learns the view-specific autoencoders
//            and the fused classifier (masked BCE + reconstruction + graph
//            disentangling). Freezing is structural: stage-1 parameters never
//            enter the stage-2 tape, so they are bit-identical afterwards.
// A one-stage variant trains everything jointly (ablation baseline).
//
// Disabling a loss term via its ablation flag is exactly equivalent to
// setting its weight to zero: in both cases the term is never evaluated and
// its logged value is 0.

#include "mvfd/common.hpp"
#include "mvfd/corruption.hpp"
#include "mvfd/data.hpp"
#include "mvfd/losses.hpp"
#include "mvfd/masking.hpp"
#include "mvfd/model.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mvfd {

struct AblationFlags {
  bool use_cp = true;   // cross-view prediction loss
  bool use_sc = true;   // semantic contrastive loss
  bool use_rec = true;  // view-specific reconstruction loss
  bool use_gd = true;   // graph disentangling loss
  bool one_stage = false;
};

struct TrainConfig {
  LossWeights weights;
  AblationFlags ablation;
  double mask_ratio = 0.3;
  int embed_dim = 512;
  int hidden_dim = 1024;
  std::string hidden_activation = "relu";
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs_stage1 = 60;
  int epochs_stage2 = 60;
  int batch_size = 128;
  uint64_t seed = 0;

  void validate() const {
    weights.validate();
    require(mask_ratio >= 0.0 && mask_ratio <= 1.0, "TrainConfig: mask_ratio must lie in [0, 1]");
    require(embed_dim >= 1 && hidden_dim >= 1, "TrainConfig: dims must be >= 1");
    activation_from_name(hidden_activation);
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "TrainConfig: Adam betas must lie in [0, 1)");
    require(adam_eps > 0.0, "TrainConfig: adam_eps must be positive");
    require(epochs_stage1 >= 0 && epochs_stage2 >= 0, "TrainConfig: epoch counts must be >= 0");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  }

  ArchConfig arch() const {
    ArchConfig a;
    a.embed_dim = embed_dim;
    a.hidden_dim = hidden_dim;
    a.hidden_activation = activation_from_name(hidden_activation);
    return a;
  }

  nlohmann::json to_json() const {
    return {{"alpha", weights.alpha},
            {"beta", weights.beta},
            {"gamma", weights.gamma},
            {"lambda", weights.lambda},
            {"tau", weights.tau},
            {"use_cp", ablation.use_cp},
            {"use_sc", ablation.use_sc},
            {"use_rec", ablation.use_rec},
            {"use_gd", ablation.use_gd},
            {"one_stage", ablation.one_stage},
            {"mask_ratio", mask_ratio},
            {"embed_dim", embed_dim},
            {"hidden_dim", hidden_dim},
            {"hidden_activation", hidden_activation},
            {"learning_rate", learning_rate},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"epochs_stage1", epochs_stage1},
            {"epochs_stage2", epochs_stage2},
            {"batch_size", batch_size},
            {"seed", seed}};
  }

  // Applies the keys present in j on top of the current values. Unknown keys
  // are an error so config typos surface instead of silently using defaults.
  void apply_json(const nlohmann::json& j) {
    require(j.is_object(), "config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      try {
        if (key == "alpha") weights.alpha = value.get<double>();
        else if (key == "beta") weights.beta = value.get<double>();
        else if (key == "gamma") weights.gamma = value.get<double>();
        else if (key == "lambda") weights.lambda = value.get<double>();
        else if (key == "tau") weights.tau = value.get<double>();
        else if (key == "use_cp") ablation.use_cp = value.get<bool>();
        else if (key == "use_sc") ablation.use_sc = value.get<bool>();
        else if (key == "use_rec") ablation.use_rec = value.get<bool>();
        else if (key == "use_gd") ablation.use_gd = value.get<bool>();
        else if (key == "one_stage") ablation.one_stage = value.get<bool>();
        else if (key == "mask_ratio") mask_ratio = value.get<double>();
        else if (key == "embed_dim") embed_dim = value.get<int>();
        else if (key == "hidden_dim") hidden_dim = value.get<int>();
        else if (key == "hidden_activation") hidden_activation = value.get<std::string>();
        else if (key == "learning_rate") learning_rate = value.get<double>();
        else if (key == "adam_beta1") adam_beta1 = value.get<double>();
        else if (key == "adam_beta2") adam_beta2 = value.get<double>();
        else if (key == "adam_eps") adam_eps = value.get<double>();
        else if (key == "epochs_stage1") epochs_stage1 = value.get<int>();
        else if (key == "epochs_stage2") epochs_stage2 = value.get<int>();
        else if (key == "batch_size") batch_size = value.get<int>();
        else if (key == "seed") seed = value.get<uint64_t>();
        else throw ValidationError("config: unknown key '" + key + "'");
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config: bad value for '" + key + "': " + e.what());
      }
    }
  }
};

class Adam {
 public:
  Adam(size_t n_params, double lr, double beta1, double beta2, double eps)
      : slots_(n_params), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads) {
    require(params.size() == slots_.size() && grads.size() == slots_.size(),
            "Adam::step: parameter/gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t k = 0; k < params.size(); ++k) {
      Mat& p = *params[k];
      const Mat& g = *grads[k];
      Slot& s = slots_[k];
      if (s.m.size() == 0) {
        s.m = Mat::Zero(p.rows(), p.cols());
        s.v = Mat::Zero(p.rows(), p.cols());
      }
      s.m = b1_ * s.m + (1.0 - b1_) * g;
      s.v = b2_ * s.v + (1.0 - b2_) * g.cwiseProduct(g);
      p.array() -= lr_ * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + eps_);
    }
  }

 private:
  struct Slot {
    Mat m, v;
  };
  std::vector<Slot> slots_;
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

enum class ParamGroup { kConsistent, kSpecificAndFused, kAll };

// Stable enumeration of trainable parameters; lifting code must mirror it.
inline std::vector<Mat*> trainable_params(ModelParams& p, ParamGroup group) {
  std::vector<Mat*> out;
  auto add_mlp = [&out](Mlp& m) {
    for (DenseLayer& l : m.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  };
  if (group == ParamGroup::kConsistent || group == ParamGroup::kAll) {
    for (Mlp& m : p.consistent_encoders) add_mlp(m);
    for (Mlp& m : p.consistent_decoders) add_mlp(m);
    add_mlp(p.shared_classifier);
  }
  if (group == ParamGroup::kSpecificAndFused || group == ParamGroup::kAll) {
    for (Mlp& m : p.specific_encoders) add_mlp(m);
    for (Mlp& m : p.specific_decoders) add_mlp(m);
    add_mlp(p.fused_classifier);
  }
  return out;
}

struct BatchRecord {
  std::string stage;
  int epoch = 0;
  int batch = 0;
  double ce1 = 0.0, cp = 0.0, sc = 0.0;   // stage-1 components
  double ce2 = 0.0, rec = 0.0, gd = 0.0;  // stage-2 components
  double total = 0.0;
  double wall_time = 0.0;  // seconds since the stage started

  nlohmann::json to_json() const {
    return {{"type", "batch"}, {"stage", stage}, {"epoch", epoch},   {"batch", batch},
            {"ce1", ce1},      {"cp", cp},       {"sc", sc},         {"ce2", ce2},
            {"rec", rec},      {"gd", gd},       {"total", total},   {"wall_time", wall_time}};
  }
};

struct DisentangleStats {
  double mean_abs_cos_shared_specific = 0.0;  // |cos(cbar_i, s_i^v)| over available views
  double mean_abs_cos_specific_pairs = 0.0;   // |cos(s_i^v, s_i^u)| over available pairs
};

// Measured on unmasked inputs over the whole dataset.
inline DisentangleStats compute_disentangle_stats(const ModelParams& p,
                                                  const MultiViewDataset& ds) {
  const EmbeddingBatch b = forward_stage2(p, ds.views, ds.view_indicator);
  const auto nc = detail::normalize_rows(b.consistent_agg);
  std::vector<detail::NormalizedRows> ns;
  for (const Mat& s : b.specific) ns.push_back(detail::normalize_rows(s));
  double cs_sum = 0.0, ss_sum = 0.0;
  int64_t cs_count = 0, ss_count = 0;
  const int m = ds.num_views();
  for (int64_t i = 0; i < ds.n(); ++i) {
    for (int v = 0; v < m; ++v) {
      if (ds.view_indicator(i, v) == 0.0) continue;
      cs_sum += std::abs(nc.R.row(i).dot(ns[static_cast<size_t>(v)].R.row(i)));
      ++cs_count;
      for (int u = 0; u < m; ++u) {
        if (u == v || ds.view_indicator(i, u) == 0.0) continue;
        ss_sum += std::abs(ns[static_cast<size_t>(v)].R.row(i).dot(ns[static_cast<size_t>(u)].R.row(i)));
        ++ss_count;
      }
    }
  }
  DisentangleStats out;
  out.mean_abs_cos_shared_specific = cs_count > 0 ? cs_sum / static_cast<double>(cs_count) : 0.0;
  out.mean_abs_cos_specific_pairs = ss_count > 0 ? ss_sum / static_cast<double>(ss_count) : 0.0;
  return out;
}

struct EpochStats {
  std::string stage;
  int epoch = 0;
  DisentangleStats disentangle;

  nlohmann::json to_json() const {
    return {{"type", "epoch"},
            {"stage", stage},
            {"epoch", epoch},
            {"mean_abs_cos_shared_specific", disentangle.mean_abs_cos_shared_specific},
            {"mean_abs_cos_specific_pairs", disentangle.mean_abs_cos_specific_pairs}};
  }
};

struct TrainResult {
  ModelParams params;
  std::vector<BatchRecord> history;
  std::vector<EpochStats> epoch_stats;
};

struct TrainHooks {
  std::function<void(const BatchRecord&)> on_batch;
  std::function<void(const EpochStats&, const ModelParams&)> on_epoch_end;
};

namespace detail {

// Seed-stream tags; each (stage, epoch) gets independent masks and batch order.
inline constexpr uint64_t kMaskTag = 0x6d61736bULL;      // "mask"
inline constexpr uint64_t kShuffleTag = 0x73687566ULL;   // "shuf"
inline constexpr uint64_t kStage1Tag = 1, kStage2Tag = 2, kOneStageTag = 3;

struct Batch {
  std::vector<Mat> x;         // original features, per view
  std::vector<Mat> x_masked;  // feature-masked features (stage-1 paths)
  Mat W, Y, G;
  bool has_labels = false;  // any observed label in the batch
};

inline Batch make_batch(const MultiViewDataset& ds, const std::vector<Mat>* masked_views,
                        const std::vector<int64_t>& rows) {
  Batch b;
  const auto nr = static_cast<Eigen::Index>(rows.size());
  auto gather = [&rows, nr](const Mat& src) {
    Mat out(nr, src.cols());
    for (Eigen::Index i = 0; i < nr; ++i) out.row(i) = src.row(rows[static_cast<size_t>(i)]);
    return out;
  };
  for (const Mat& v : ds.views) b.x.push_back(gather(v));
  if (masked_views) {
    for (const Mat& v : *masked_views) b.x_masked.push_back(gather(v));
  }
  b.W = gather(ds.view_indicator);
  b.Y = gather(ds.labels);
  b.G = gather(ds.label_indicator);
  b.has_labels = b.G.sum() > 0.0;
  return b;
}

inline std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int batch_size, Rng& rng) {
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  std::vector<std::vector<int64_t>> batches;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t end = std::min<int64_t>(start + batch_size, n);
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

struct LiftedGroups {
  std::vector<LiftedMlp> consistent_enc, consistent_dec, specific_enc, specific_dec;
  LiftedMlp shared_cls, fused_cls;
  std::vector<Var> param_vars;  // same order as trainable_params(group)

  void collect(const std::vector<LiftedMlp>& ms) {
    for (const LiftedMlp& m : ms) {
      for (const auto& [w, b] : m.layers) {
        param_vars.push_back(w);
        param_vars.push_back(b);
      }
    }
  }
};

inline LiftedGroups lift_group(Tape& t, const ModelParams& p, ParamGroup group) {
  LiftedGroups lg;
  if (group == ParamGroup::kConsistent || group == ParamGroup::kAll) {
    for (const Mlp& m : p.consistent_encoders) lg.consistent_enc.push_back(lift(t, m));
    for (const Mlp& m : p.consistent_decoders) lg.consistent_dec.push_back(lift(t, m));
    lg.shared_cls = lift(t, p.shared_classifier);
    lg.collect(lg.consistent_enc);
    lg.collect(lg.consistent_dec);
    lg.collect({lg.shared_cls});
  }
  if (group == ParamGroup::kSpecificAndFused || group == ParamGroup::kAll) {
    for (const Mlp& m : p.specific_encoders) lg.specific_enc.push_back(lift(t, m));
    for (const Mlp& m : p.specific_decoders) lg.specific_dec.push_back(lift(t, m));
    lg.fused_cls = lift(t, p.fused_classifier);
    lg.collect(lg.specific_enc);
    lg.collect(lg.specific_dec);
    lg.collect({lg.fused_cls});
  }
  return lg;
}

struct LossTerms {
  Var total;
  double ce1 = 0.0, cp = 0.0, sc = 0.0, ce2 = 0.0, rec = 0.0, gd = 0.0;
};

// Stage-1 graph over masked inputs. Terms with zero weight are not built.
inline LossTerms stage1_graph(Tape& t, const LiftedGroups& lg, const Batch& b,
                              const TrainConfig& cfg) {
  const double w_cp = cfg.ablation.use_cp ? cfg.weights.alpha : 0.0;
  const double w_sc = cfg.ablation.use_sc ? cfg.weights.beta : 0.0;
  const int m = static_cast<int>(b.x.size());
  std::vector<Var> C;
  for (int v = 0; v < m; ++v) {
    Var xv = t.leaf(b.x_masked[static_cast<size_t>(v)]);
    C.push_back(lg.consistent_enc[static_cast<size_t>(v)].forward(t, xv));
  }
  Var cbar = t.aggregate_available(C, b.W);

  std::vector<std::pair<Var, double>> terms;
  LossTerms out;
  if (b.has_labels) {
    Var probs = t.sigmoid(lg.shared_cls.forward(t, cbar), kProbEps);
    Var ce = masked_bce_loss_op(t, probs, b.Y, b.G);
    out.ce1 = t.value(ce)(0, 0);
    terms.emplace_back(ce, 1.0);
  }
  if (w_cp > 0.0) {
    std::vector<Var> recon;
    for (int v = 0; v < m; ++v)
      recon.push_back(lg.consistent_dec[static_cast<size_t>(v)].forward(t, cbar));
    Var cp = masked_prediction_loss_op(t, recon, b.x, b.W);
    out.cp = t.value(cp)(0, 0);
    terms.emplace_back(cp, w_cp);
  }
  if (w_sc > 0.0) {
    std::vector<Var> preds;
    for (int v = 0; v < m; ++v)
      preds.push_back(t.sigmoid(lg.shared_cls.forward(t, C[static_cast<size_t>(v)]), kProbEps));
    Var sc = semantic_contrastive_loss_op(t, preds, b.W, cfg.weights.tau);
    out.sc = t.value(sc)(0, 0);
    terms.emplace_back(sc, w_sc);
  }
  require(!terms.empty(), "stage 1: batch has no observed labels and all extra terms disabled");
  out.total = t.weighted_sum(terms);
  return out;
}

// Stage-2 graph over unmasked inputs. `cbar_const` is the frozen consistent
// aggregate, entering the tape only as a leaf.
inline LossTerms stage2_graph(Tape& t, const LiftedGroups& lg, const Batch& b,
                              const Mat& cbar_const, const TrainConfig& cfg) {
  const double w_rec = cfg.ablation.use_rec ? cfg.weights.gamma : 0.0;
  const double w_gd = cfg.ablation.use_gd ? cfg.weights.lambda : 0.0;
  const int m = static_cast<int>(b.x.size());
  std::vector<Var> S;
  for (int v = 0; v < m; ++v) {
    Var xv = t.leaf(b.x[static_cast<size_t>(v)]);
    S.push_back(lg.specific_enc[static_cast<size_t>(v)].forward(t, xv));
  }
  Var sbar = t.aggregate_available(S, b.W);
  Var cbar = t.leaf(cbar_const);

  std::vector<std::pair<Var, double>> terms;
  LossTerms out;
  if (b.has_labels) {
    Var fused = t.star_fuse(sbar, cbar);
    Var probs = t.sigmoid(lg.fused_cls.forward(t, fused), kProbEps);
    Var ce = masked_bce_loss_op(t, probs, b.Y, b.G);
    out.ce2 = t.value(ce)(0, 0);
    terms.emplace_back(ce, 1.0);
  }
  if (w_rec > 0.0) {
    std::vector<Var> recon;
    for (int v = 0; v < m; ++v)
      recon.push_back(lg.specific_dec[static_cast<size_t>(v)].forward(t, S[static_cast<size_t>(v)]));
    Var rec = masked_prediction_loss_op(t, recon, b.x, b.W);
    out.rec = t.value(rec)(0, 0);
    terms.emplace_back(rec, w_rec);
  }
  if (w_gd > 0.0) {
    Var gd = graph_disentangling_loss_op(t, cbar, S, b.W);
    out.gd = t.value(gd)(0, 0);
    terms.emplace_back(gd, w_gd);
  }
  require(!terms.empty(), "stage 2: batch has no observed labels and all extra terms disabled");
  out.total = t.weighted_sum(terms);
  return out;
}

inline void check_finite(const LossTerms& terms, const Tape& t, const std::string& stage,
                         int epoch, int batch) {
  const double total = t.value(terms.total)(0, 0);
  if (std::isfinite(total)) return;
  throw TrainError("training diverged (" + stage + ", epoch " + std::to_string(epoch) +
                   ", batch " + std::to_string(batch) + "): total=" + std::to_string(total) +
                   " ce1=" + std::to_string(terms.ce1) + " cp=" + std::to_string(terms.cp) +
                   " sc=" + std::to_string(terms.sc) + " ce2=" + std::to_string(terms.ce2) +
                   " rec=" + std::to_string(terms.rec) + " gd=" + std::to_string(terms.gd));
}

}  // namespace detail

inline TrainResult train_stage1(const MultiViewDataset& ds, const TrainConfig& cfg,
                                const TrainHooks& hooks = {}) {
  cfg.validate();
  ds.validate();
  TrainResult result;
  result.params = ModelParams::init(ds.view_dims(), ds.num_labels(), cfg.arch(), cfg.seed);
  std::vector<Mat*> params = trainable_params(result.params, ParamGroup::kConsistent);
  Adam opt(params.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  WallTimer timer;
  const auto dims = ds.view_dims();

  for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    const auto masks = sample_feature_masks(
        dims, ds.n(), cfg.mask_ratio,
        mix_seed(cfg.seed, detail::kMaskTag + (detail::kStage1Tag << 32) + epoch));
    const auto masked_views = apply_masks(ds.views, masks);
    Rng shuffle_rng(mix_seed(cfg.seed, detail::kShuffleTag + (detail::kStage1Tag << 32) + epoch));
    const auto batches = detail::epoch_batches(ds.n(), cfg.batch_size, shuffle_rng);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto batch = detail::make_batch(ds, &masked_views, batches[bi]);
      Tape t;
      const auto lg = detail::lift_group(t, result.params, ParamGroup::kConsistent);
      const auto terms = detail::stage1_graph(t, lg, batch, cfg);
      detail::check_finite(terms, t, "stage1", epoch, static_cast<int>(bi));
      t.backward(terms.total);
      std::vector<const Mat*> grads;
      grads.reserve(lg.param_vars.size());
      for (Var v : lg.param_vars) grads.push_back(&t.grad(v));
      opt.step(params, grads);

      BatchRecord rec;
      rec.stage = "stage1";
      rec.epoch = epoch;
      rec.batch = static_cast<int>(bi);
      rec.ce1 = terms.ce1;
      rec.cp = terms.cp;
      rec.sc = terms.sc;
      rec.total = t.value(terms.total)(0, 0);
      rec.wall_time = timer.seconds();
      if (hooks.on_batch) hooks.on_batch(rec);
      result.history.push_back(std::move(rec));
    }
    EpochStats es;
    es.stage = "stage1";
    es.epoch = epoch;
    es.disentangle = compute_disentangle_stats(result.params, ds);
    if (hooks.on_epoch_end) hooks.on_epoch_end(es, result.params);
    result.epoch_stats.push_back(std::move(es));
  }
  return result;
}

inline TrainResult train_stage2(const MultiViewDataset& ds, ModelParams stage1_params,
                                const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  ds.validate();
  require(stage1_params.view_dims == ds.view_dims() && stage1_params.num_labels == ds.num_labels(),
          "train_stage2: checkpoint architecture does not match the dataset");
  TrainResult result;
  result.params = std::move(stage1_params);
  // Seed each specific encoder from the trained consistent encoder for its
  // view. The specific branch then starts out carrying the full shared
  // content, and the disentangling term spends stage 2 stripping that
  // redundancy instead of pushing randomly-initialized embeddings into
  // arbitrary anti-aligned directions.
  for (size_t v = 0; v < result.params.specific_encoders.size(); ++v)
    result.params.specific_encoders[v] = result.params.consistent_encoders[v];
  std::vector<Mat*> params = trainable_params(result.params, ParamGroup::kSpecificAndFused);
  Adam opt(params.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  WallTimer timer;

  for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, detail::kShuffleTag + (detail::kStage2Tag << 32) + epoch));
    const auto batches = detail::epoch_batches(ds.n(), cfg.batch_size, shuffle_rng);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto batch = detail::make_batch(ds, nullptr, batches[bi]);
      // Frozen consistent branch, evaluated outside the tape.
      const Mat cbar_const =
          aggregate_available(encode_each(result.params.consistent_encoders, batch.x), batch.W);
      Tape t;
      const auto lg = detail::lift_group(t, result.params, ParamGroup::kSpecificAndFused);
      const auto terms = detail::stage2_graph(t, lg, batch, cbar_const, cfg);
      detail::check_finite(terms, t, "stage2", epoch, static_cast<int>(bi));
      t.backward(terms.total);
      std::vector<const Mat*> grads;
      grads.reserve(lg.param_vars.size());
      for (Var v : lg.param_vars) grads.push_back(&t.grad(v));
      opt.step(params, grads);

      BatchRecord rec;
      rec.stage = "stage2";
      rec.epoch = epoch;
      rec.batch = static_cast<int>(bi);
      rec.ce2 = terms.ce2;
      rec.rec = terms.rec;
      rec.gd = terms.gd;
      rec.total = t.value(terms.total)(0, 0);
      rec.wall_time = timer.seconds();
      if (hooks.on_batch) hooks.on_batch(rec);
      result.history.push_back(std::move(rec));
    }
    EpochStats es;
    es.stage = "stage2";
    es.epoch = epoch;
    es.disentangle = compute_disentangle_stats(result.params, ds);
    if (hooks.on_epoch_end) hooks.on_epoch_end(es, result.params);
    result.epoch_stats.push_back(std::move(es));
  }
  return result;
}

// Joint single-stage variant: all six objectives at once, nothing frozen. The
// consistent aggregate feeding fusion and disentangling comes from the same
// (trainable) consistent encoders applied to unmasked inputs.
inline TrainResult train_one_stage(const MultiViewDataset& ds, const TrainConfig& cfg,
                                   const TrainHooks& hooks = {}) {
  cfg.validate();
  ds.validate();
  TrainResult result;
  result.params = ModelParams::init(ds.view_dims(), ds.num_labels(), cfg.arch(), cfg.seed);
  std::vector<Mat*> params = trainable_params(result.params, ParamGroup::kAll);
  Adam opt(params.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  WallTimer timer;
  const auto dims = ds.view_dims();
  const int epochs = std::max(cfg.epochs_stage1, cfg.epochs_stage2);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto masks = sample_feature_masks(
        dims, ds.n(), cfg.mask_ratio,
        mix_seed(cfg.seed, detail::kMaskTag + (detail::kOneStageTag << 32) + epoch));
    const auto masked_views = apply_masks(ds.views, masks);
    Rng shuffle_rng(
        mix_seed(cfg.seed, detail::kShuffleTag + (detail::kOneStageTag << 32) + epoch));
    const auto batches = detail::epoch_batches(ds.n(), cfg.batch_size, shuffle_rng);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto batch = detail::make_batch(ds, &masked_views, batches[bi]);
      Tape t;
      const auto lg = detail::lift_group(t, result.params, ParamGroup::kAll);

      // Stage-1 objectives on the masked branch.
      const auto s1 = detail::stage1_graph(t, lg, batch, cfg);
      // Stage-2 objectives; the consistent aggregate stays inside the tape.
      const double w_rec = cfg.ablation.use_rec ? cfg.weights.gamma : 0.0;
      const double w_gd = cfg.ablation.use_gd ? cfg.weights.lambda : 0.0;
      const int m = static_cast<int>(batch.x.size());
      std::vector<Var> Cu, S;
      for (int v = 0; v < m; ++v) {
        Var xv = t.leaf(batch.x[static_cast<size_t>(v)]);
        Cu.push_back(lg.consistent_enc[static_cast<size_t>(v)].forward(t, xv));
        S.push_back(lg.specific_enc[static_cast<size_t>(v)].forward(t, xv));
      }
      Var cbar_u = t.aggregate_available(Cu, batch.W);
      Var sbar = t.aggregate_available(S, batch.W);
      std::vector<std::pair<Var, double>> terms{{s1.total, 1.0}};
      detail::LossTerms all = s1;
      if (batch.has_labels) {
        Var fused = t.star_fuse(sbar, cbar_u);
        Var probs = t.sigmoid(lg.fused_cls.forward(t, fused), kProbEps);
        Var ce2 = masked_bce_loss_op(t, probs, batch.Y, batch.G);
        all.ce2 = t.value(ce2)(0, 0);
        terms.emplace_back(ce2, 1.0);
      }
      if (w_rec > 0.0) {
        std::vector<Var> recon;
        for (int v = 0; v < m; ++v)
          recon.push_back(
              lg.specific_dec[static_cast<size_t>(v)].forward(t, S[static_cast<size_t>(v)]));
        Var rec = masked_prediction_loss_op(t, recon, batch.x, batch.W);
        all.rec = t.value(rec)(0, 0);
        terms.emplace_back(rec, w_rec);
      }
      if (w_gd > 0.0) {
        Var gd = graph_disentangling_loss_op(t, cbar_u, S, batch.W);
        all.gd = t.value(gd)(0, 0);
        terms.emplace_back(gd, w_gd);
      }
      all.total = t.weighted_sum(terms);
      detail::check_finite(all, t, "one_stage", epoch, static_cast<int>(bi));
      t.backward(all.total);
      std::vector<const Mat*> grads;
      grads.reserve(lg.param_vars.size());
      for (Var v : lg.param_vars) grads.push_back(&t.grad(v));
      opt.step(params, grads);

      BatchRecord rec;
      rec.stage = "one_stage";
      rec.epoch = epoch;
      rec.batch = static_cast<int>(bi);
      rec.ce1 = all.ce1;
      rec.cp = all.cp;
      rec.sc = all.sc;
      rec.ce2 = all.ce2;
      rec.rec = all.rec;
      rec.gd = all.gd;
      rec.total = t.value(all.total)(0, 0);
      rec.wall_time = timer.seconds();
      if (hooks.on_batch) hooks.on_batch(rec);
      result.history.push_back(std::move(rec));
    }
    EpochStats es;
    es.stage = "one_stage";
    es.epoch = epoch;
    es.disentangle = compute_disentangle_stats(result.params, ds);
    if (hooks.on_epoch_end) hooks.on_epoch_end(es, result.params);
    result.epoch_stats.push_back(std::move(es));
  }
  return result;
}

// Convenience wrapper running the configured pipeline (two-stage or joint).
inline TrainResult train_full(const MultiViewDataset& ds, const TrainConfig& cfg,
                              const TrainHooks& hooks = {}) {
  if (cfg.ablation.one_stage) return train_one_stage(ds, cfg, hooks);
  TrainResult s1 = train_stage1(ds, cfg, hooks);
  TrainResult s2 = train_stage2(ds, std::move(s1.params), cfg, hooks);
  TrainResult out;
  out.params = std::move(s2.params);
  out.history = std::move(s1.history);
  out.history.insert(out.history.end(), s2.history.begin(), s2.history.end());
  out.epoch_stats = std::move(s1.epoch_stats);
  out.epoch_stats.insert(out.epoch_stats.end(), s2.epoch_stats.begin(), s2.epoch_stats.end());
  return out;
}

inline Mat predict(const ModelParams& params, const MultiViewDataset& ds) {
  return predict(params, ds.views, ds.view_indicator);
}

}  // namespace mvfd
