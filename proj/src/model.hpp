// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffmath.hpp"
#include "losses.hpp"
#include "sampling.hpp"

namespace momentloc {

struct ModelConfig {
  std::int64_t d_model = 64;
  std::int64_t loc_layers = 2;
  std::int64_t loc_heads = 4;
  std::int64_t text_layers = 2;
  std::int64_t text_heads = 4;
  std::int64_t buckets = 16;
  std::int64_t vocab = 8;
  std::int64_t d_video = 32;
  std::int64_t max_text_len = 16;
  std::int64_t max_video_len = 256;
  std::int64_t ffn_mult = 2;

  /// Throws DomainError naming the first invalid field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Field table used by checkpoints, config files and mismatch reports.
inline constexpr std::array<std::pair<const char*, std::int64_t ModelConfig::*>, 11>
    kModelConfigFields{{{"d_model", &ModelConfig::d_model},
                        {"loc_layers", &ModelConfig::loc_layers},
                        {"loc_heads", &ModelConfig::loc_heads},
                        {"text_layers", &ModelConfig::text_layers},
                        {"text_heads", &ModelConfig::text_heads},
                        {"buckets", &ModelConfig::buckets},
                        {"vocab", &ModelConfig::vocab},
                        {"d_video", &ModelConfig::d_video},
                        {"max_text_len", &ModelConfig::max_text_len},
                        {"max_video_len", &ModelConfig::max_video_len},
                        {"ffn_mult", &ModelConfig::ffn_mult}}};

/// Number of framing positions added around the query (CLS and SEP).
inline constexpr std::int64_t kTextSpecials = 2;

struct LocalizationOutput {
  diffmath::Var start_probs;  // v x 1
  diffmath::Var end_probs;    // v x 1
  /// loc_layers * loc_heads row-stochastic (m+2+v)^2 matrices, layer-major.
  std::vector<diffmath::Var> attention;
  /// text_layers * text_heads matrices over the framed query.
  std::vector<diffmath::Var> text_attention;
  diffmath::Var text_states;   // (m+2) x d_model
  diffmath::Var joint_states;  // (m+2+v) x d_model
  std::size_t text_positions = 0;
};

// Query encoder plus multi-modal localization transformer. Blocks are
// pre-norm; both stacks end with a layer norm.
class Model {
 public:
  /// Random initialization, deterministic per seed.
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<diffmath::Parameter*> parameters();
  std::vector<const diffmath::Parameter*> parameters() const;
  diffmath::Parameter& parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  /// Framed query states, (m+2) x d_model. Throws DomainError on overlong
  /// input or out-of-vocabulary ids.
  diffmath::Var text_encode(diffmath::Tape& tape, std::span<const std::int32_t> tokens,
                            std::vector<diffmath::Var>* attention = nullptr);

  LocalizationOutput localize(diffmath::Tape& tape, diffmath::Var text_states,
                              const Matrix& sampled);

  LocalizationOutput forward(diffmath::Tape& tape, std::span<const std::int32_t> tokens,
                             const Matrix& sampled);

  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

 private:
  struct Weights;
  struct Block;
  struct Head;

  diffmath::Var run_block(diffmath::Tape& tape, Block& blk, diffmath::Var x, std::int64_t heads,
                          std::vector<diffmath::Var>* attention);
  diffmath::Var run_head(diffmath::Tape& tape, Head& head, diffmath::Var h);
  void index_parameters();

  ModelConfig cfg_;
  std::unique_ptr<Weights> w_;
  std::vector<diffmath::Parameter*> index_;
};

/// Decodes the most likely span: argmax of each distribution (first index on
/// ties), swapped when start > end, converted to seconds through the plan.
Span predict_span(const LocalizationOutput& out, const BucketPlan& plan, double duration);
std::pair<std::int64_t, std::int64_t> predict_buckets(const LocalizationOutput& out);

struct LossOptions {
  bool enable_att = true;
  bool enable_se = true;
  bool literal_order_min = false;
  bool supervise_all_heads = false;
  std::int64_t soft_label_width = 1;
};

struct LossBreakdown {
  double kl = 0.0;
  double att = 0.0;
  double se = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    kl += o.kl;
    att += o.att;
    se += o.se;
    total += o.total;
    return *this;
  }
};

/// Forward pass plus the enabled losses for one prepared example.
diffmath::Var example_loss(diffmath::Tape& tape, Model& model,
                           std::span<const std::int32_t> tokens, const PreparedExample& ex,
                           const LossOptions& opts, LossBreakdown* breakdown = nullptr);

// First-order adaptive-moment optimizer with a fixed step size.
class Adam {
 public:
  Adam(std::vector<diffmath::Parameter*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step();
  std::int64_t steps() const noexcept { return t_; }

 private:
  std::vector<diffmath::Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct BatchItem {
  std::span<const std::int32_t> tokens;
  const PreparedExample* example = nullptr;
};

/// Averaged loss over the batch, one backward per example, then one Adam
/// update. Returns the pre-update batch-mean losses.
LossBreakdown train_step(Model& model, Adam& opt, std::span<const BatchItem> batch,
                         const LossOptions& opts);

/// Checkpoint layout: "LGCK", u16 version, config block, parameter blocks.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);
/// Throws MismatchError naming the first field that differs.
void require_same_config(const ModelConfig& expected, const ModelConfig& actual);

}  // namespace momentloc
