#pragma once

// Synthetic trainable-token study. Each class owns a few tokens, a handful of
// background tokens are shared by every class, and a sample is a bag of n
// token draws mixing the two. Samples are pooled (GAP or GSP), trained with a
// metric-learning loss (optionally mixed with the zero-shot regularizer), and
// scored by MAP@R on a freshly drawn evaluation pool every epoch.
//
// Parameters are the token table, the prototype bank and the label
// embedding table. All randomness flows from the seed; one stream drives
// initialization, batches and splits, a second one the evaluation pools.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gsp/dml.hpp"
#include "gsp/error.hpp"
#include "gsp/linalg.hpp"
#include "gsp/metrics.hpp"
#include "gsp/pooling.hpp"
#include "gsp/transport.hpp"
#include "gsp/zsr.hpp"

namespace gsp {

struct SyntheticConfig {
  int n_classes = 16;
  int tokens_per_class = 4;
  int shared_tokens = 4;
  int sample_len = 50;
  int token_dim = 2;
  int prototypes = 64;
  double mu = 0.3;
  double epsilon = 5.0;
  int transport_iters = 100;
  double ridge_eps = 0.05;
  double lambda = 0.1;
  double mix_mean = 0.5;
  double mix_std = 0.1;
  double token_range = 0.3;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  int patience = 30;
  int max_epochs = 300;
  int batches_per_epoch = 50;
  int samples_per_class = 4;
  int eval_samples_per_class = 20;
  std::string loss = "contrastive";  // or "triplet"
  double margin_pos = 0.0;
  double margin_neg = 0.3841;
  double triplet_margin = 0.1;
  std::string pooling = "gsp";  // or "gap"
  bool zsr_enabled = false;
  std::uint64_t seed = 0;

  std::size_t num_tokens() const {
    return static_cast<std::size_t>(n_classes * tokens_per_class + shared_tokens);
  }

  TransportConfig transport() const {
    TransportConfig t;
    t.mu = mu;
    t.epsilon = epsilon;
    t.max_iters = transport_iters;
    return t;
  }

  // The zero-shot term needs attribute vectors regardless of the pooling.
  bool uses_zsr() const { return zsr_enabled && lambda > 0.0; }
  bool uses_transport() const { return pooling == "gsp" || uses_zsr(); }

  void validate() const {
    auto positive = [](const char* name, double v) {
      if (!(v > 0.0)) throw ConfigError(std::string("synthetic config: ") + name + " must be > 0");
    };
    positive("n_classes", n_classes);
    positive("tokens_per_class", tokens_per_class);
    positive("shared_tokens", shared_tokens);
    positive("sample_len", sample_len);
    positive("token_dim", token_dim);
    positive("prototypes", prototypes);
    positive("epsilon", epsilon);
    positive("transport_iters", transport_iters);
    positive("ridge_eps", ridge_eps);
    positive("token_range", token_range);
    positive("lr", lr);
    positive("adam_eps", adam_eps);
    positive("patience", patience);
    positive("max_epochs", max_epochs);
    positive("batches_per_epoch", batches_per_epoch);
    positive("eval_samples_per_class", eval_samples_per_class);
    if (pooling != "gap" && pooling != "gsp")
      throw ConfigError("synthetic config: pooling must be \"gap\" or \"gsp\", got \"" + pooling + "\"");
    if (loss != "contrastive" && loss != "triplet")
      throw ConfigError("synthetic config: loss must be \"contrastive\" or \"triplet\", got \"" + loss + "\"");
    if (!(mu > 0.0 && mu < 1.0))
      throw ConfigError("synthetic config: mu must lie in (0, 1); the transport backward is undefined at mu = 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("synthetic config: lambda must lie in [0, 1]");
    if (!(mix_std >= 0.0)) throw ConfigError("synthetic config: mix_std must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("synthetic config: Adam betas must lie in [0, 1)");
    if (n_classes < 2) throw ConfigError("synthetic config: need at least two classes");
    if (samples_per_class < 2) throw ConfigError("synthetic config: samples_per_class must be >= 2");
    if (!(margin_pos >= 0.0 && margin_neg > margin_pos))
      throw ConfigError("synthetic config: margins must satisfy margin_neg > margin_pos >= 0");
    if (!(triplet_margin >= 0.0)) throw ConfigError("synthetic config: triplet_margin must be >= 0");
  }
};

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  if (!j.is_object()) throw ConfigError("synthetic config: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const nlohmann::json& v = it.value();
    try {
      if (k == "n_classes") c.n_classes = v.get<int>();
      else if (k == "tokens_per_class") c.tokens_per_class = v.get<int>();
      else if (k == "shared_tokens") c.shared_tokens = v.get<int>();
      else if (k == "sample_len") c.sample_len = v.get<int>();
      else if (k == "token_dim") c.token_dim = v.get<int>();
      else if (k == "prototypes") c.prototypes = v.get<int>();
      else if (k == "mu") c.mu = v.get<double>();
      else if (k == "epsilon") c.epsilon = v.get<double>();
      else if (k == "transport_iters") c.transport_iters = v.get<int>();
      else if (k == "ridge_eps") c.ridge_eps = v.get<double>();
      else if (k == "lambda") c.lambda = v.get<double>();
      else if (k == "mix_mean") c.mix_mean = v.get<double>();
      else if (k == "mix_std") c.mix_std = v.get<double>();
      else if (k == "token_range") c.token_range = v.get<double>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "beta1") c.beta1 = v.get<double>();
      else if (k == "beta2") c.beta2 = v.get<double>();
      else if (k == "adam_eps") c.adam_eps = v.get<double>();
      else if (k == "patience") c.patience = v.get<int>();
      else if (k == "max_epochs") c.max_epochs = v.get<int>();
      else if (k == "batches_per_epoch") c.batches_per_epoch = v.get<int>();
      else if (k == "samples_per_class") c.samples_per_class = v.get<int>();
      else if (k == "eval_samples_per_class") c.eval_samples_per_class = v.get<int>();
      else if (k == "loss") c.loss = v.get<std::string>();
      else if (k == "margin_pos") c.margin_pos = v.get<double>();
      else if (k == "margin_neg") c.margin_neg = v.get<double>();
      else if (k == "triplet_margin") c.triplet_margin = v.get<double>();
      else if (k == "pooling") c.pooling = v.get<std::string>();
      else if (k == "zsr_enabled") c.zsr_enabled = v.get<bool>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("synthetic config: unknown key \"" + k + "\"");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("synthetic config: bad value for \"" + k + "\": " + e.what());
    }
  }
}

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"n_classes", c.n_classes},
                     {"tokens_per_class", c.tokens_per_class},
                     {"shared_tokens", c.shared_tokens},
                     {"sample_len", c.sample_len},
                     {"token_dim", c.token_dim},
                     {"prototypes", c.prototypes},
                     {"mu", c.mu},
                     {"epsilon", c.epsilon},
                     {"transport_iters", c.transport_iters},
                     {"ridge_eps", c.ridge_eps},
                     {"lambda", c.lambda},
                     {"mix_mean", c.mix_mean},
                     {"mix_std", c.mix_std},
                     {"token_range", c.token_range},
                     {"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"patience", c.patience},
                     {"max_epochs", c.max_epochs},
                     {"batches_per_epoch", c.batches_per_epoch},
                     {"samples_per_class", c.samples_per_class},
                     {"eval_samples_per_class", c.eval_samples_per_class},
                     {"loss", c.loss},
                     {"margin_pos", c.margin_pos},
                     {"margin_neg", c.margin_neg},
                     {"triplet_margin", c.triplet_margin},
                     {"pooling", c.pooling},
                     {"zsr_enabled", c.zsr_enabled},
                     {"seed", c.seed}};
}

inline SyntheticConfig parse_synthetic_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("synthetic config: ") + e.what(), 0);
  }
  SyntheticConfig c = j.get<SyntheticConfig>();
  c.validate();
  return c;
}

// --- data -------------------------------------------------------------------

// Token rows: class c owns rows [c * tokens_per_class, (c + 1) * tokens_per_class),
// the shared tokens follow all class tokens.
struct SyntheticParams {
  Matrix tokens;  // num_tokens x d
  Matrix protos;  // m x d
  Matrix table;   // n_classes x d
};

template <class Rng>
SyntheticParams init_params(const SyntheticConfig& cfg, Rng& rng) {
  const auto d = static_cast<std::size_t>(cfg.token_dim);
  std::uniform_real_distribution<double> box(-cfg.token_range, cfg.token_range);
  std::normal_distribution<double> label(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  SyntheticParams p{Matrix(cfg.num_tokens(), d), Matrix(static_cast<std::size_t>(cfg.prototypes), d),
                    Matrix(static_cast<std::size_t>(cfg.n_classes), d)};
  for (double& v : p.tokens.data()) v = box(rng);
  for (double& v : p.protos.data()) v = box(rng);
  for (double& v : p.table.data()) v = label(rng);
  return p;
}

struct Sample {
  int label = 0;
  double mix = 0.0;
  std::size_t class_draws = 0;
  std::vector<std::size_t> tokens;  // row indices into the token table
};

// round(mix * n) draws from the class tokens, the rest from the shared ones.
template <class Rng>
Sample compose_sample(const SyntheticConfig& cfg, int label, double mix, Rng& rng) {
  Sample s;
  s.label = label;
  s.mix = std::clamp(mix, 0.0, 1.0);
  const auto n = static_cast<std::size_t>(cfg.sample_len);
  s.class_draws = static_cast<std::size_t>(std::lround(s.mix * static_cast<double>(n)));
  const auto tpc = static_cast<std::size_t>(cfg.tokens_per_class);
  const std::size_t shared_base = static_cast<std::size_t>(cfg.n_classes) * tpc;
  std::uniform_int_distribution<std::size_t> own(0, tpc - 1);
  std::uniform_int_distribution<std::size_t> shared(0, static_cast<std::size_t>(cfg.shared_tokens) - 1);
  s.tokens.reserve(n);
  for (std::size_t k = 0; k < s.class_draws; ++k) s.tokens.push_back(static_cast<std::size_t>(label) * tpc + own(rng));
  for (std::size_t k = s.class_draws; k < n; ++k) s.tokens.push_back(shared_base + shared(rng));
  return s;
}

// per_class samples of every class, grouped by class.
template <class Rng>
std::vector<Sample> sample_batch(const SyntheticConfig& cfg, int per_class, Rng& rng) {
  std::normal_distribution<double> mix(cfg.mix_mean, cfg.mix_std);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_classes * per_class));
  for (int c = 0; c < cfg.n_classes; ++c)
    for (int k = 0; k < per_class; ++k) {
      const double m = mix(rng);
      out.push_back(compose_sample(cfg, c, m, rng));
    }
  return out;
}

template <class Rng>
std::vector<Sample> sample_batch(const SyntheticConfig& cfg, Rng& rng) {
  return sample_batch(cfg, cfg.samples_per_class, rng);
}

inline FeatureSet gather_features(const Matrix& tokens, const Sample& s) {
  FeatureSet f(s.tokens.size(), tokens.cols());
  for (std::size_t j = 0; j < s.tokens.size(); ++j) {
    auto src = tokens.row(s.tokens[j]);
    std::copy(src.begin(), src.end(), f.row(j).begin());
  }
  return f;
}

// --- optimizer --------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};

// Bias-corrected Adam. When clip > 0 the parameters are clamped to
// [-clip, clip] after the update.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      const AdamConfig& cfg, double clip = 0.0) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  if (!(cfg.eps > 0.0)) throw ConfigError("adam_step: eps must be > 0");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
    params[k] -= cfg.lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + cfg.eps);
    if (clip > 0.0) params[k] = std::clamp(params[k], -clip, clip);
  }
}

// --- training ---------------------------------------------------------------

struct Counters {
  std::size_t transport_forward = 0;
  std::size_t transport_backward = 0;
  std::size_t zsr_calls = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double map_at_r = 0.0;
  double p_at_1 = 0.0;
  double p_at_r = 0.0;
};

struct RunReport {
  SyntheticConfig config;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_map_at_r = 0.0;
  std::string status;  // early_stopped, max_epochs or diverged
  SyntheticParams params;  // restored at the best epoch
  Matrix eval_embeddings;  // evaluation pool of the best epoch
  std::vector<int> eval_labels;
  Counters counters;
  double wall_seconds = 0.0;
};

namespace detail {

inline Matrix pool_samples(const SyntheticConfig& cfg, const SyntheticParams& p,
                           const std::vector<Sample>& samples, Counters& counters) {
  Matrix e(samples.size(), static_cast<std::size_t>(cfg.token_dim));
  const TransportConfig tc = cfg.transport();
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const FeatureSet f = gather_features(p.tokens, samples[s]);
    Vector x;
    if (cfg.pooling == "gsp") {
      x = gsp_forward(f, p.protos, tc).pooled;
      ++counters.transport_forward;
    } else {
      x = gap(f);
    }
    std::copy(x.begin(), x.end(), e.row(s).begin());
  }
  return e;
}

inline void scatter_rows(Matrix& g_tokens, const Sample& s, const Matrix& g_feats) {
  for (std::size_t j = 0; j < s.tokens.size(); ++j) {
    auto dst = g_tokens.row(s.tokens[j]);
    auto src = g_feats.row(j);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

inline void add_into(Matrix& dst, const Matrix& src, double scale = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] += scale * s[k];
}

struct StepResult {
  double loss = 0.0;
  Matrix g_tokens, g_protos, g_table;
};

template <class Rng>
StepResult train_step(const SyntheticConfig& cfg, const SyntheticParams& p, const std::vector<Sample>& batch,
                      Rng& rng, Counters& counters) {
  const std::size_t b = batch.size(), d = static_cast<std::size_t>(cfg.token_dim);
  const std::size_t m = static_cast<std::size_t>(cfg.prototypes);
  const TransportConfig tc = cfg.transport();
  const bool gsp_pooling = cfg.pooling == "gsp";
  const bool zsr = cfg.uses_zsr();

  std::vector<FeatureSet> feats(b);
  std::vector<GspOutput> outs(cfg.uses_transport() ? b : 0);
  EmbeddingBatch eb{Matrix(b, d), std::vector<int>(b)};
  Matrix z(m, zsr ? b : 0);
  for (std::size_t s = 0; s < b; ++s) {
    feats[s] = gather_features(p.tokens, batch[s]);
    eb.labels[s] = batch[s].label;
    Vector x;
    if (cfg.uses_transport()) {
      outs[s] = gsp_forward(feats[s], p.protos, tc);
      ++counters.transport_forward;
      if (zsr)
        for (std::size_t i = 0; i < m; ++i) z(i, s) = outs[s].attributes[i];
    }
    x = gsp_pooling ? outs[s].pooled : gap(feats[s]);
    std::copy(x.begin(), x.end(), eb.embeddings.row(s).begin());
  }

  const LossResult dml = cfg.loss == "contrastive" ? contrastive_c2(eb, cfg.margin_pos, cfg.margin_neg)
                                                   : triplet(eb, cfg.triplet_margin);
  StepResult r{dml.value, Matrix(p.tokens.rows(), d), Matrix(m, d), Matrix(p.table.rows(), d)};
  double w_dml = 1.0;
  ZsrResult zr;
  if (zsr) {
    zr = zsr_loss(z, eb.labels, p.table, cfg.ridge_eps, rng);
    ++counters.zsr_calls;
    r.loss = combined_loss(dml.value, zr.loss, cfg.lambda);
    w_dml = 1.0 - cfg.lambda;
    add_into(r.g_table, zr.grad_table, cfg.lambda);
  }

  for (std::size_t s = 0; s < b; ++s) {
    Vector g_x(d);
    for (std::size_t k = 0; k < d; ++k) g_x[k] = w_dml * dml.grad(s, k);
    Vector g_z(m, 0.0);
    if (zsr)
      for (std::size_t i = 0; i < m; ++i) g_z[i] = cfg.lambda * zr.grad_z(i, s);
    if (gsp_pooling || zsr) {
      // Under GAP pooling the transport only feeds z, so its pooled output gets no gradient.
      const GspGradients g = gsp_backward(outs[s], gsp_pooling ? g_x : Vector(d, 0.0), g_z);
      ++counters.transport_backward;
      scatter_rows(r.g_tokens, batch[s], g.feats);
      add_into(r.g_protos, g.protos);
    }
    if (!gsp_pooling) scatter_rows(r.g_tokens, batch[s], gap_backward(batch[s].tokens.size(), g_x));
  }
  return r;
}

}  // namespace detail

// on_epoch, when set, sees every epoch record as it is produced.
inline RunReport train(const SyntheticConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 eval_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  RunReport rep;
  rep.config = cfg;
  SyntheticParams p = init_params(cfg, rng);
  rep.params = p;
  AdamState st_tokens, st_protos, st_table;
  const AdamConfig ac{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  int since_best = 0;
  rep.status = "max_epochs";

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double total = 0.0;
    bool finite = true;
    for (int it = 0; it < cfg.batches_per_epoch; ++it) {
      const std::vector<Sample> batch = sample_batch(cfg, rng);
      detail::StepResult step = detail::train_step(cfg, p, batch, rng, rep.counters);
      if (!std::isfinite(step.loss) || !all_finite(step.g_tokens.data()) || !all_finite(step.g_protos.data()) ||
          !all_finite(step.g_table.data())) {
        finite = false;
        break;
      }
      total += step.loss;
      adam_step(p.tokens.data(), step.g_tokens.data(), st_tokens, ac, cfg.token_range);
      if (cfg.uses_transport()) adam_step(p.protos.data(), step.g_protos.data(), st_protos, ac);
      if (cfg.uses_zsr()) adam_step(p.table.data(), step.g_table.data(), st_table, ac);
    }
    if (!finite) {
      rep.status = "diverged";
      break;
    }

    const std::vector<Sample> pool = sample_batch(cfg, cfg.eval_samples_per_class, eval_rng);
    std::vector<int> labels(pool.size());
    for (std::size_t s = 0; s < pool.size(); ++s) labels[s] = pool[s].label;
    const Matrix emb = detail::pool_samples(cfg, p, pool, rep.counters);
    const RetrievalMetrics met = evaluate_retrieval(emb, labels);

    EpochRecord rec{epoch, total / cfg.batches_per_epoch, met.map_at_r, met.p_at_1, met.p_at_r};
    rep.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rep.best_epoch < 0 || met.map_at_r > rep.best_map_at_r) {
      rep.best_epoch = epoch;
      rep.best_map_at_r = met.map_at_r;
      rep.params = p;
      rep.eval_embeddings = emb;
      rep.eval_labels = labels;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.status = "early_stopped";
      break;
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// --- serialization ----------------------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(m.row_vector(i));
  return rows;
}

// Wall-clock is left out unless asked for, so reports under one seed are
// byte-identical.
inline nlohmann::json report_to_json(const RunReport& r, bool with_timing = false) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"map_at_r", e.map_at_r},
                      {"p_at_1", e.p_at_1},
                      {"p_at_r", e.p_at_r}});
  nlohmann::json j{{"config", r.config},
                   {"seed", r.config.seed},
                   {"status", r.status},
                   {"best_epoch", r.best_epoch},
                   {"best_map_at_r", r.best_map_at_r},
                   {"epochs", epochs},
                   {"counters",
                    {{"transport_forward", r.counters.transport_forward},
                     {"transport_backward", r.counters.transport_backward},
                     {"zsr_calls", r.counters.zsr_calls}}},
                   {"params",
                    {{"tokens", matrix_to_json(r.params.tokens)},
                     {"prototypes", matrix_to_json(r.params.protos)},
                     {"label_embeddings", matrix_to_json(r.params.table)}}}};
  if (with_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

inline void write_epochs_csv(std::ostream& os, const RunReport& r) {
  os << "epoch,train_loss,map_at_r,p_at_1,p_at_r\n";
  for (const EpochRecord& e : r.epochs)
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.map_at_r) << ','
       << format_double(e.p_at_1) << ',' << format_double(e.p_at_r) << '\n';
}

// kind,label,x0..x{d-1}. Embedding rows carry the sample's class; token rows
// carry the owning class, or -1 for shared tokens.
inline void export_geometry(std::ostream& os, const RunReport& r) {
  const auto d = static_cast<std::size_t>(r.config.token_dim);
  os << "kind,label";
  for (std::size_t k = 0; k < d; ++k) os << ",x" << k;
  os << '\n';
  if (r.epochs.empty()) return;
  for (std::size_t i = 0; i < r.eval_embeddings.rows(); ++i) {
    os << "embedding," << r.eval_labels[i];
    for (double v : r.eval_embeddings.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
  const auto owned = static_cast<std::size_t>(r.config.n_classes * r.config.tokens_per_class);
  for (std::size_t t = 0; t < r.params.tokens.rows(); ++t) {
    const long label = t < owned ? static_cast<long>(t / static_cast<std::size_t>(r.config.tokens_per_class)) : -1;
    os << "token," << label;
    for (double v : r.params.tokens.row(t)) os << ',' << format_double(v);
    os << '\n';
  }
}

struct Geometry {
  std::vector<std::string> kind;
  std::vector<int> label;
  Matrix coords;
};

inline Geometry read_geometry(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("geometry: missing header", 1);
  const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (cols < 2 || line.rfind("kind,label", 0) != 0) throw ParseError("geometry: bad header", 1);
  const std::size_t d = cols - 1;
  Geometry g;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    g.kind.push_back(field);
    std::getline(ss, field, ',');
    g.label.push_back(static_cast<int>(parse_double(field, lineno)));
    std::size_t got = 0;
    while (std::getline(ss, field, ',')) {
      values.push_back(parse_double(field, lineno));
      ++got;
    }
    if (got != d) throw ParseError("geometry: expected " + std::to_string(d) + " coordinates", lineno);
  }
  g.coords = Matrix(g.kind.size(), d, std::move(values));
  return g;
}

}  // namespace gsp
