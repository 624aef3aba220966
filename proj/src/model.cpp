// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The momentloc Authors

#include "model.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"

namespace momentloc {

using diffmath::Parameter;
using diffmath::Tape;
using diffmath::Var;

void ModelConfig::validate() const {
  for (const auto& [name, field] : kModelConfigFields)
    if (this->*field < 1) throw DomainError(std::string("ModelConfig: ") + name + " must be >= 1");
  if (d_model % loc_heads != 0) throw DomainError("ModelConfig: d_model must be divisible by loc_heads");
  if (d_model % text_heads != 0) throw DomainError("ModelConfig: d_model must be divisible by text_heads");
}

struct Model::Block {
  Parameter ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_ff1, b_ff1, w_ff2, b_ff2;
};

struct Model::Head {
  Parameter w1, b1, w2, b2;
};

struct Model::Weights {
  Parameter tok_emb, text_pos, text_ln_g, text_ln_b;
  std::vector<Block> text_blocks;
  Parameter video_ln_g, video_ln_b, video_w, video_b, video_pos, type_emb, loc_ln_g, loc_ln_b;
  std::vector<Block> loc_blocks;
  Head start_head, end_head;
};

namespace {

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

Parameter gaussian(std::string name, std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = stddev * rng.normal();
  return Parameter(std::move(name), std::move(m));
}

Parameter constant(std::string name, std::size_t rows, std::size_t cols, double value) {
  return Parameter(std::move(name), Matrix(rows, cols, value));
}

Parameter dense(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return gaussian(std::move(name), fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), w_(std::make_unique<Weights>()) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = sz(cfg.d_model);
  const std::size_t ff = d * sz(cfg.ffn_mult);
  auto block = [&](const std::string& p) {
    Block b;
    b.ln1_g = constant(p + ".ln1.gain", 1, d, 1.0);
    b.ln1_b = constant(p + ".ln1.bias", 1, d, 0.0);
    b.w_qkv = dense(p + ".attn.qkv.weight", d, 3 * d, rng);
    b.b_qkv = constant(p + ".attn.qkv.bias", 1, 3 * d, 0.0);
    b.w_o = dense(p + ".attn.out.weight", d, d, rng);
    b.b_o = constant(p + ".attn.out.bias", 1, d, 0.0);
    b.ln2_g = constant(p + ".ln2.gain", 1, d, 1.0);
    b.ln2_b = constant(p + ".ln2.bias", 1, d, 0.0);
    b.w_ff1 = dense(p + ".ffn.in.weight", d, ff, rng);
    b.b_ff1 = constant(p + ".ffn.in.bias", 1, ff, 0.0);
    b.w_ff2 = dense(p + ".ffn.out.weight", ff, d, rng);
    b.b_ff2 = constant(p + ".ffn.out.bias", 1, d, 0.0);
    return b;
  };
  auto head = [&](const std::string& p) {
    Head h;
    h.w1 = dense(p + ".hidden.weight", d, d, rng);
    h.b1 = constant(p + ".hidden.bias", 1, d, 0.0);
    h.w2 = dense(p + ".score.weight", d, 1, rng);
    h.b2 = constant(p + ".score.bias", 1, 1, 0.0);
    return h;
  };
  Weights& w = *w_;
  w.tok_emb = gaussian("text.token_embedding", sz(cfg.vocab + kTextSpecials), d, 1.0, rng);
  w.text_pos = gaussian("text.position_embedding", sz(cfg.max_text_len + kTextSpecials), d, 0.1, rng);
  for (std::int64_t l = 0; l < cfg.text_layers; ++l) w.text_blocks.push_back(block("text.block" + std::to_string(l)));
  w.text_ln_g = constant("text.ln.gain", 1, d, 1.0);
  w.text_ln_b = constant("text.ln.bias", 1, d, 0.0);
  w.video_ln_g = constant("video.norm.gain", 1, sz(cfg.d_video), 1.0);
  w.video_ln_b = constant("video.norm.bias", 1, sz(cfg.d_video), 0.0);
  w.video_w = dense("video.proj.weight", sz(cfg.d_video), d, rng);
  w.video_b = constant("video.proj.bias", 1, d, 0.0);
  w.video_pos = gaussian("video.position_embedding", sz(cfg.max_video_len), d, 0.1, rng);
  w.type_emb = gaussian("loc.type_embedding", 2, d, 0.1, rng);
  for (std::int64_t l = 0; l < cfg.loc_layers; ++l) w.loc_blocks.push_back(block("loc.block" + std::to_string(l)));
  w.loc_ln_g = constant("loc.ln.gain", 1, d, 1.0);
  w.loc_ln_b = constant("loc.ln.bias", 1, d, 0.0);
  w.start_head = head("head.start");
  w.end_head = head("head.end");
  index_parameters();
}

Model::Model(const Model& other) : cfg_(other.cfg_), w_(std::make_unique<Weights>(*other.w_)) {
  index_parameters();
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    cfg_ = other.cfg_;
    w_ = std::make_unique<Weights>(*other.w_);
    index_parameters();
  }
  return *this;
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

void Model::index_parameters() {
  index_.clear();
  Weights& w = *w_;
  auto add_block = [this](Block& b) {
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.w_qkv, &b.b_qkv, &b.w_o, &b.b_o, &b.ln2_g, &b.ln2_b,
                         &b.w_ff1, &b.b_ff1, &b.w_ff2, &b.b_ff2})
      index_.push_back(p);
  };
  index_.push_back(&w.tok_emb);
  index_.push_back(&w.text_pos);
  for (Block& b : w.text_blocks) add_block(b);
  index_.push_back(&w.text_ln_g);
  index_.push_back(&w.text_ln_b);
  index_.push_back(&w.video_ln_g);
  index_.push_back(&w.video_ln_b);
  index_.push_back(&w.video_w);
  index_.push_back(&w.video_b);
  index_.push_back(&w.video_pos);
  index_.push_back(&w.type_emb);
  for (Block& b : w.loc_blocks) add_block(b);
  index_.push_back(&w.loc_ln_g);
  index_.push_back(&w.loc_ln_b);
  for (Head* h : {&w.start_head, &w.end_head})
    for (Parameter* p : {&h->w1, &h->b1, &h->w2, &h->b2}) index_.push_back(p);
}

std::vector<Parameter*> Model::parameters() { return index_; }

std::vector<const Parameter*> Model::parameters() const {
  return {index_.begin(), index_.end()};
}

Parameter& Model::parameter(const std::string& name) {
  for (Parameter* p : index_)
    if (p->name == name) return *p;
  throw DomainError("no parameter named '" + name + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : index_) n += p->value.size();
  return n;
}

void Model::zero_grad() {
  for (Parameter* p : index_) p->zero_grad();
}

Var Model::run_block(Tape& tape, Block& blk, Var x, std::int64_t heads,
                     std::vector<Var>* attention) {
  using namespace diffmath;
  const std::size_t d = sz(cfg_.d_model);
  const std::size_t dk = d / sz(heads);
  Var h = layer_norm(x, tape.param(blk.ln1_g), tape.param(blk.ln1_b));
  Var qkv = linear(h, tape.param(blk.w_qkv), tape.param(blk.b_qkv));
  std::vector<Var> outs;
  outs.reserve(sz(heads));
  for (std::size_t hd = 0; hd < sz(heads); ++hd) {
    Var probs = attention_probs(qkv, hd * dk, d + hd * dk, dk);
    if (attention != nullptr) attention->push_back(probs);
    outs.push_back(attend(probs, qkv, 2 * d + hd * dk, dk));
  }
  Var merged = concat(outs, 1);
  Var x1 = add(x, linear(merged, tape.param(blk.w_o), tape.param(blk.b_o)));
  Var h2 = layer_norm(x1, tape.param(blk.ln2_g), tape.param(blk.ln2_b));
  Var ff = linear(gelu(linear(h2, tape.param(blk.w_ff1), tape.param(blk.b_ff1))),
                  tape.param(blk.w_ff2), tape.param(blk.b_ff2));
  return add(x1, ff);
}

Var Model::run_head(Tape& tape, Head& head, Var h) {
  using namespace diffmath;
  Var hidden = gelu(linear(h, tape.param(head.w1), tape.param(head.b1)));
  return softmax(linear(hidden, tape.param(head.w2), tape.param(head.b2)), 0);
}

Var Model::text_encode(Tape& tape, std::span<const std::int32_t> tokens,
                       std::vector<Var>* attention) {
  if (tokens.empty()) throw DomainError("text_encode: empty query");
  if (static_cast<std::int64_t>(tokens.size()) > cfg_.max_text_len)
    throw DomainError("text_encode: query of " + std::to_string(tokens.size()) +
                      " tokens exceeds max_text_len " + std::to_string(cfg_.max_text_len));
  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size() + kTextSpecials);
  ids.push_back(cfg_.vocab);  // CLS
  for (std::int32_t tk : tokens) {
    if (tk < 0 || tk >= cfg_.vocab)
      throw DomainError("text_encode: token " + std::to_string(tk) + " outside vocabulary");
    ids.push_back(tk);
  }
  ids.push_back(cfg_.vocab + 1);  // SEP
  Weights& w = *w_;
  Var x = diffmath::embedding_lookup(tape.param(w.tok_emb), ids);
  x = diffmath::add_rows(x, tape.param(w.text_pos), 0);
  for (Block& b : w.text_blocks) x = run_block(tape, b, x, cfg_.text_heads, attention);
  return diffmath::layer_norm(x, tape.param(w.text_ln_g), tape.param(w.text_ln_b));
}

LocalizationOutput Model::localize(Tape& tape, Var text_states, const Matrix& sampled) {
  using namespace diffmath;
  if (static_cast<std::int64_t>(sampled.cols()) != cfg_.d_video)
    throw DomainError("localize: video features have width " + std::to_string(sampled.cols()) +
                      ", model expects d_video=" + std::to_string(cfg_.d_video));
  if (sampled.rows() == 0) throw DomainError("localize: empty video");
  if (static_cast<std::int64_t>(sampled.rows()) > cfg_.max_video_len)
    throw DomainError("localize: " + std::to_string(sampled.rows()) +
                      " video positions exceed max_video_len " + std::to_string(cfg_.max_video_len));
  if (static_cast<std::int64_t>(text_states.cols()) != cfg_.d_model)
    throw DomainError("localize: text states have the wrong width");
  Weights& w = *w_;
  LocalizationOutput out;
  out.text_states = text_states;
  out.text_positions = text_states.rows();
  Var type = tape.param(w.type_emb);
  Var text = add_row(text_states, type, 0);
  Var video = layer_norm(tape.constant(sampled), tape.param(w.video_ln_g), tape.param(w.video_ln_b));
  video = linear(video, tape.param(w.video_w), tape.param(w.video_b));
  video = add_row(add_rows(video, tape.param(w.video_pos), 0), type, 1);
  const Var parts[] = {text, video};
  Var x = concat(parts, 0);
  for (Block& b : w.loc_blocks) x = run_block(tape, b, x, cfg_.loc_heads, &out.attention);
  x = layer_norm(x, tape.param(w.loc_ln_g), tape.param(w.loc_ln_b));
  out.joint_states = x;
  Var hv = slice(x, 0, out.text_positions, x.rows());
  out.start_probs = run_head(tape, w.start_head, hv);
  out.end_probs = run_head(tape, w.end_head, hv);
  return out;
}

LocalizationOutput Model::forward(Tape& tape, std::span<const std::int32_t> tokens,
                                  const Matrix& sampled) {
  std::vector<Var> text_attn;
  Var text = text_encode(tape, tokens, &text_attn);
  LocalizationOutput out = localize(tape, text, sampled);
  out.text_attention = std::move(text_attn);
  return out;
}

namespace {

std::int64_t argmax_first(const Matrix& m) {
  const auto vals = m.values();
  return static_cast<std::int64_t>(std::max_element(vals.begin(), vals.end()) - vals.begin()) + 1;
}

}  // namespace

std::pair<std::int64_t, std::int64_t> predict_buckets(const LocalizationOutput& out) {
  std::int64_t s = argmax_first(out.start_probs.value());
  std::int64_t e = argmax_first(out.end_probs.value());
  if (s > e) std::swap(s, e);
  return {s, e};
}

Span predict_span(const LocalizationOutput& out, const BucketPlan& plan, double duration) {
  const auto [s, e] = predict_buckets(out);
  if (e > plan.m_buckets()) throw DomainError("predict_span: output longer than the bucket plan");
  if (plan.uniform())
    return {bucket_index_to_span(s, plan.m_buckets(), duration).start,
            bucket_index_to_span(e, plan.m_buckets(), duration).end};
  const double per_index = duration / static_cast<double>(plan.n());
  return {static_cast<double>(plan.bucket(s).lo - 1) * per_index,
          static_cast<double>(plan.bucket(e).hi) * per_index};
}

Var example_loss(Tape& tape, Model& model, std::span<const std::int32_t> tokens,
                 const PreparedExample& ex, const LossOptions& opts, LossBreakdown* breakdown) {
  LocalizationOutput out = model.forward(tape, tokens, ex.sampled.features);
  const std::int64_t v = ex.sampled.rows();
  Var kl_s = kl_loss(out.start_probs, make_soft_labels(ex.start_bucket, v, opts.soft_label_width));
  Var kl_e = kl_loss(out.end_probs, make_soft_labels(ex.end_bucket, v, opts.soft_label_width));
  Var zero = tape.constant(Matrix(1, 1, 0.0));
  Var att = zero;
  if (opts.enable_att) {
    const GuidanceVector g = make_guidance(out.text_positions, v, ex.start_bucket, ex.end_bucket);
    att = attention_guidance_loss(out.attention, g);
    if (opts.supervise_all_heads && !out.text_attention.empty()) {
      // Query-only heads see an all-ones guidance vector.
      const GuidanceVector gt = make_guidance(out.text_positions - 1, 1, 1, 1);
      att = diffmath::add(att, attention_guidance_loss(out.text_attention, gt));
    }
  }
  Var se = opts.enable_se ? temporal_order_loss(out.start_probs, out.end_probs, opts.literal_order_min) : zero;
  Var total = total_loss(kl_s, kl_e, att, se);
  if (breakdown != nullptr) {
    breakdown->kl = kl_s.scalar() + kl_e.scalar();
    breakdown->att = att.scalar();
    breakdown->se = se.scalar();
    breakdown->total = total.scalar();
  }
  return total;
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    double* val = p.value.data();
    const double* g = p.grad.data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      val[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

LossBreakdown train_step(Model& model, Adam& opt, std::span<const BatchItem> batch,
                         const LossOptions& opts) {
  if (batch.empty()) throw DomainError("train_step: empty batch");
  model.zero_grad();
  LossBreakdown mean;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const BatchItem& item : batch) {
    Tape tape;
    LossBreakdown one;
    Var loss = example_loss(tape, model, item.tokens, *item.example, opts, &one);
    if (!std::isfinite(one.total)) throw NumericError("train_step: non-finite loss");
    tape.backward(diffmath::scale(loss, inv));
    mean.kl += one.kl * inv;
    mean.att += one.att * inv;
    mean.se += one.se * inv;
    mean.total += one.total * inv;
  }
  opt.step();
  return mean;
}

namespace {
constexpr char kCheckpointMagic[4] = {'L', 'G', 'C', 'K'};
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  binio::Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.uint<std::uint16_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(kModelConfigFields.size()));
  for (const auto& [name, field] : kModelConfigFields) {
    w.str16(name);
    w.uint<std::uint64_t>(static_cast<std::uint64_t>(model.config().*field));
  }
  const auto params = model.parameters();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.str16(p->name);
    w.uint<std::uint8_t>(8);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p->value.rows()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p->value.cols()));
    for (double v : p->value.values()) w.f64(v);
  }
  w.save(path);
}

Model load_checkpoint(const std::string& path) {
  auto r = binio::Reader::load(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError(0, "bad checkpoint magic");
  const auto version_at = r.offset();
  if (const auto version = r.uint<std::uint16_t>("version"); version != kCheckpointVersion)
    throw FormatError(version_at, "unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  const auto nfields = r.uint<std::uint32_t>("config count");
  for (std::uint32_t i = 0; i < nfields; ++i) {
    const auto at = r.offset();
    const std::string name = r.str16("config name");
    const auto value = static_cast<std::int64_t>(r.uint<std::uint64_t>("config value"));
    bool known = false;
    for (const auto& [fname, field] : kModelConfigFields) {
      if (name == fname) {
        cfg.*field = value;
        known = true;
      }
    }
    if (!known) throw FormatError(at, "unknown config field '" + name + "'");
  }
  const auto cfg_at = r.offset();
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw FormatError(cfg_at, e.what());
  }
  Model model(cfg, 0);
  const auto nparams = r.uint<std::uint32_t>("parameter count");
  if (nparams != model.parameters().size())
    throw FormatError(cfg_at, "expected " + std::to_string(model.parameters().size()) +
                                  " parameter blocks, found " + std::to_string(nparams));
  for (std::uint32_t i = 0; i < nparams; ++i) {
    const auto at = r.offset();
    const std::string name = r.str16("parameter name");
    Parameter* p = nullptr;
    try {
      p = &model.parameter(name);
    } catch (const DomainError&) {
      throw FormatError(at, "unknown parameter '" + name + "'");
    }
    const auto width = r.uint<std::uint8_t>("scalar width");
    const auto rows = r.uint<std::uint32_t>("rows");
    const auto cols = r.uint<std::uint32_t>("cols");
    if (width != 8 && width != 4) throw FormatError(at, "scalar width must be 4 or 8");
    if (rows != p->value.rows() || cols != p->value.cols())
      throw FormatError(at, "shape mismatch for '" + name + "'");
    r.need(static_cast<std::size_t>(rows) * cols * width, "parameter payload");
    for (double& v : p->value.values()) v = width == 8 ? r.f64("payload") : r.f32("payload");
  }
  if (r.remaining() != 0) throw FormatError(r.offset(), "trailing bytes after checkpoint");
  return model;
}

void require_same_config(const ModelConfig& expected, const ModelConfig& actual) {
  for (const auto& [name, field] : kModelConfigFields)
    if (expected.*field != actual.*field)
      throw MismatchError(name, "expected " + std::to_string(expected.*field) + ", checkpoint has " +
                                    std::to_string(actual.*field));
}

}  // namespace momentloc
