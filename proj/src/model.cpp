#include "gnndsr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gnndsr/rng.hpp"

namespace gnndsr {

const char* mode_name(Mode m) { return m == Mode::rating ? "rating" : "ranking"; }

Mode mode_from_name(const std::string& name) {
  if (name == "rating") return Mode::rating;
  if (name == "ranking") return Mode::ranking;
  throw ValidationError("unknown mode '" + name + "' (expected rating|ranking)");
}

void AblationConfig::validate() const {
  if (!use_lstm && !use_att) {
    throw ValidationError("ablation disables both interaction pathways (LSTM and attention)");
  }
}

AblationConfig ablation_from_name(const std::string& name) {
  AblationConfig a;
  if (name == "full") return a;
  if (name == "w/o_LSTM") {
    a.use_lstm = false;
  } else if (name == "w/o_ATT") {
    a.use_att = false;
  } else if (name == "w/o_SN") {
    a.use_social = false;
  } else if (name == "w/o_CN") {
    a.use_correlative = false;
  } else if (name == "w/o_SC") {
    a.use_social = false;
    a.use_correlative = false;
  } else {
    throw ValidationError("unknown ablation '" + name +
                          "' (expected full|w/o_LSTM|w/o_ATT|w/o_SN|w/o_CN|w/o_SC)");
  }
  return a;
}

std::string ablation_name(const AblationConfig& a) {
  if (!a.use_social && !a.use_correlative) return a.use_lstm && a.use_att ? "w/o_SC" : "custom";
  if (!a.use_lstm) return "w/o_LSTM";
  if (!a.use_att) return "w/o_ATT";
  if (!a.use_social) return "w/o_SN";
  if (!a.use_correlative) return "w/o_CN";
  return "full";
}

namespace {

Tensor linear(GradTape& t, const LinearParams& p, const Tensor& x) {
  return t.add(t.matmul(p.w, x), p.b);
}

Tensor mlp2_forward(GradTape& t, const Mlp2Params& p, const Tensor& x) {
  return linear(t, p.l2, t.relu(linear(t, p.l1, x)));
}

Tensor mlp3_forward(GradTape& t, const Mlp3Params& p, const Tensor& x) {
  return linear(t, p.l3, t.relu(linear(t, p.l2, t.relu(linear(t, p.l1, x)))));
}

}  // namespace

ModelParams ModelParams::build(int n_users, int n_items, int n_ratings, int d, int lstm_layers) {
  if (d < 1) throw ValidationError("embedding width must be positive");
  if (lstm_layers < 1) throw ValidationError("lstm_layers must be positive");
  if (n_users < 1 || n_items < 1 || n_ratings < 1) {
    throw ValidationError("model needs at least one user, item, and rating value");
  }
  ModelParams p;
  p.d = d;
  p.lstm_layers = lstm_layers;
  auto mat = [](int r, int c) { return Tensor::zeros({r, c}, true); };
  auto vec = [](int n) { return Tensor::zeros({n}, true); };
  p.user_emb = mat(n_users, d);
  p.item_emb = mat(n_items, d);
  p.rating_emb = mat(n_ratings, d);
  auto mlp2 = [&](Mlp2Params& m) {
    m.l1 = {mat(d, 2 * d), vec(d)};
    m.l2 = {mat(d, d), vec(d)};
  };
  mlp2(p.mlp_uv);
  mlp2(p.mlp_vu);
  for (auto* lstm : {&p.lstm_u, &p.lstm_v}) {
    lstm->resize(lstm_layers);
    for (auto& layer : *lstm) {
      layer = {mat(4 * d, d), mat(4 * d, d), vec(4 * d), vec(4 * d)};
    }
  }
  auto att = [&](AttentionParams& a) {
    a.score1 = {mat(d, 2 * d), vec(d)};
    a.score2 = {mat(1, d), vec(1)};
    a.out = {mat(d, d), vec(d)};
  };
  att(p.att_uv);
  att(p.att_vu);
  att(p.att_uu);
  att(p.att_vv);
  mlp2(p.mlp_u);
  mlp2(p.mlp_v);
  const int h2 = std::max(1, d / 2);
  p.head.l1 = {mat(d, 2 * d), vec(d)};
  p.head.l2 = {mat(h2, d), vec(h2)};
  p.head.l3 = {mat(1, h2), vec(1)};
  return p;
}

ModelParams ModelParams::init(int n_users, int n_items, int n_ratings, int d, int lstm_layers,
                              std::mt19937_64& rng) {
  ModelParams p = build(n_users, n_items, n_ratings, d, lstm_layers);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  // Weight matrices and embedding tables are uniform in (-bound, bound);
  // biases stay zero except the LSTM forget gate.
  for (auto& [name, tensor] : p.named_params()) {
    const bool is_matrix = tensor.shape().size() == 2;
    if (!is_matrix) continue;
    for (double& v : tensor.mutable_data()) v = uniform_range(rng, -bound, bound);
  }
  for (auto* lstm : {&p.lstm_u, &p.lstm_v}) {
    for (auto& layer : *lstm) {
      auto& b = layer.b_ih.mutable_data();
      for (int i = d; i < 2 * d; ++i) b[i] = 1.0;
    }
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("user_emb", user_emb);
  out.emplace_back("item_emb", item_emb);
  out.emplace_back("rating_emb", rating_emb);
  auto add_mlp2 = [&](const std::string& name, const Mlp2Params& m) {
    out.emplace_back(name + ".l1.w", m.l1.w);
    out.emplace_back(name + ".l1.b", m.l1.b);
    out.emplace_back(name + ".l2.w", m.l2.w);
    out.emplace_back(name + ".l2.b", m.l2.b);
  };
  add_mlp2("mlp_uv", mlp_uv);
  add_mlp2("mlp_vu", mlp_vu);
  auto add_lstm = [&](const std::string& name, const std::vector<LstmLayerParams>& lstm) {
    for (std::size_t i = 0; i < lstm.size(); ++i) {
      const std::string prefix = name + "." + std::to_string(i);
      out.emplace_back(prefix + ".w_ih", lstm[i].w_ih);
      out.emplace_back(prefix + ".w_hh", lstm[i].w_hh);
      out.emplace_back(prefix + ".b_ih", lstm[i].b_ih);
      out.emplace_back(prefix + ".b_hh", lstm[i].b_hh);
    }
  };
  add_lstm("lstm_u", lstm_u);
  add_lstm("lstm_v", lstm_v);
  auto add_att = [&](const std::string& name, const AttentionParams& a) {
    out.emplace_back(name + ".score1.w", a.score1.w);
    out.emplace_back(name + ".score1.b", a.score1.b);
    out.emplace_back(name + ".score2.w", a.score2.w);
    out.emplace_back(name + ".score2.b", a.score2.b);
    out.emplace_back(name + ".out.w", a.out.w);
    out.emplace_back(name + ".out.b", a.out.b);
  };
  add_att("att_uv", att_uv);
  add_att("att_vu", att_vu);
  add_att("att_uu", att_uu);
  add_att("att_vv", att_vv);
  add_mlp2("mlp_u", mlp_u);
  add_mlp2("mlp_v", mlp_v);
  out.emplace_back("head.l1.w", head.l1.w);
  out.emplace_back("head.l1.b", head.l1.b);
  out.emplace_back("head.l2.w", head.l2.w);
  out.emplace_back("head.l2.b", head.l2.b);
  out.emplace_back("head.l3.w", head.l3.w);
  out.emplace_back("head.l3.b", head.l3.b);
  return out;
}

std::vector<Tensor> ModelParams::all_params() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_params()) out.push_back(tensor);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams p = build(n_users(), n_items(), n_ratings(), d, lstm_layers);
  auto src = named_params();
  auto dst = p.named_params();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].second.mutable_data() = src[i].second.data();
  }
  return p;
}

Tensor interaction_embedding(GradTape& t, const ModelParams& p, Side side, int rating_idx,
                             int counterpart) {
  Tensor rating = t.row(p.rating_emb, rating_idx);
  if (side == Side::user) {
    return mlp2_forward(t, p.mlp_uv, t.concat(rating, t.row(p.item_emb, counterpart)));
  }
  return mlp2_forward(t, p.mlp_vu, t.concat(rating, t.row(p.user_emb, counterpart)));
}

Tensor dynamic_rep(GradTape& t, const std::vector<LstmLayerParams>& lstm,
                   const std::vector<Tensor>& seq, int d) {
  if (seq.empty()) return Tensor::zeros({d});
  std::vector<Tensor> inputs = seq;
  for (const auto& layer : lstm) {
    Tensor h = Tensor::zeros({d});
    Tensor c = Tensor::zeros({d});
    std::vector<Tensor> outputs;
    outputs.reserve(inputs.size());
    for (const Tensor& x : inputs) {
      Tensor gates = t.add(t.add(t.matmul(layer.w_ih, x), layer.b_ih),
                           t.add(t.matmul(layer.w_hh, h), layer.b_hh));
      Tensor ig = t.sigmoid(t.slice(gates, 0, d));
      Tensor fg = t.sigmoid(t.slice(gates, d, d));
      Tensor gg = t.tanh(t.slice(gates, 2 * d, d));
      Tensor og = t.sigmoid(t.slice(gates, 3 * d, d));
      c = t.add(t.hadamard(fg, c), t.hadamard(ig, gg));
      h = t.hadamard(og, t.tanh(c));
      outputs.push_back(h);
    }
    inputs = std::move(outputs);
  }
  return inputs.back();
}

namespace {

// Shared attention form of the static and relational aggregations.
Tensor attention_aggregate(GradTape& t, const AttentionParams& att, const Tensor& center,
                           std::vector<EdgeRep> edges,
                           std::vector<std::pair<std::int64_t, double>>* weights_out,
                           AttentionTrace* trace) {
  const int d = center.shape()[0];
  if (edges.empty()) return Tensor::zeros({d});
  std::sort(edges.begin(), edges.end(), [](const EdgeRep& a, const EdgeRep& b) {
    return std::tie(a.order_key, a.label) < std::tie(b.order_key, b.label);
  });
  std::vector<Tensor> scores;
  scores.reserve(edges.size());
  for (const EdgeRep& e : edges) {
    Tensor hidden = t.relu(linear(t, att.score1, t.concat(center, e.rep)));
    scores.push_back(linear(t, att.score2, hidden));
  }
  Tensor alpha = t.softmax(t.stack(scores));
  if (trace) trace->all_vectors.push_back(alpha.data());
  if (weights_out) {
    weights_out->clear();
    for (std::size_t i = 0; i < edges.size(); ++i) {
      weights_out->emplace_back(edges[i].label, alpha.data()[i]);
    }
  }
  Tensor pooled = t.mul_scalar(edges[0].rep, t.index(alpha, 0));
  for (std::size_t i = 1; i < edges.size(); ++i) {
    pooled = t.add(pooled, t.mul_scalar(edges[i].rep, t.index(alpha, static_cast<int>(i))));
  }
  return t.relu(linear(t, att.out, pooled));
}

}  // namespace

Tensor static_rep(GradTape& t, const AttentionParams& att, const Tensor& center,
                  std::vector<EdgeRep> edges,
                  std::vector<std::pair<std::int64_t, double>>* weights_out,
                  AttentionTrace* trace) {
  return attention_aggregate(t, att, center, std::move(edges), weights_out, trace);
}

Tensor interactional_rep(GradTape& t, const Tensor& dynamic, const Tensor& stat,
                         const AblationConfig& ablation) {
  ablation.validate();
  if (!ablation.use_lstm) return stat;
  if (!ablation.use_att) return dynamic;
  return t.hadamard(dynamic, stat);
}

Tensor relational_agg(GradTape& t, const AttentionParams& att, Side side,
                      const AblationConfig& ablation, const Tensor& center,
                      std::vector<EdgeRep> neighbors,
                      std::vector<std::pair<std::int64_t, double>>* weights_out,
                      AttentionTrace* trace) {
  const bool enabled = side == Side::user ? ablation.use_social : ablation.use_correlative;
  if (!enabled) return Tensor::zeros({center.shape()[0]});
  return attention_aggregate(t, att, center, std::move(neighbors), weights_out, trace);
}

Tensor latent_factor(GradTape& t, const Mlp2Params& mlp, const Tensor& interactional,
                     const Tensor& relational) {
  if (interactional.shape() != relational.shape()) {
    throw DimensionError("latent_factor: shape mismatch " + shape_str(interactional.shape()) +
                         " vs " + shape_str(relational.shape()));
  }
  return mlp2_forward(t, mlp, t.concat(interactional, relational));
}

Tensor predict(GradTape& t, const Mlp3Params& head, const Tensor& h_user, const Tensor& h_item,
               Mode mode) {
  if (h_user.shape() != h_item.shape()) {
    throw DimensionError("predict: shape mismatch " + shape_str(h_user.shape()) + " vs " +
                         shape_str(h_item.shape()));
  }
  Tensor out = mlp3_forward(t, head, t.concat(h_user, h_item));
  return mode == Mode::ranking ? t.sigmoid(out) : out;
}

void export_attention(const AttentionTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  char buf[64];
  for (const auto& group : trace.groups) {
    for (const auto& [neighbor, weight] : group.weights) {
      std::snprintf(buf, sizeof(buf), "%.17g", weight);
      out << group.block << "\t" << group.target << "\t" << neighbor << "\t" << buf << "\n";
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

Model::Model(const ModelParams& params, const Dataset& data, const CorrelativeGraph& graph,
             ModelConfig config)
    : params_(params), data_(data), graph_(graph), cfg_(config) {
  cfg_.ablation.validate();
  if (params_.n_users() != data_.n_users || params_.n_items() != data_.n_items) {
    throw ValidationError("parameter tables do not match the dataset dimensions");
  }
  if (static_cast<int>(graph_.adj.size()) != data_.n_items) {
    throw ValidationError("correlative graph does not match the dataset item count");
  }
}

Tensor Model::entity_interactional(GradTape& t, Side side, int id, std::int64_t tau,
                                   AttentionTrace* trace,
                                   std::vector<std::pair<std::int64_t, double>>* weights_out) const {
  const auto& seq = side == Side::user ? data_.user_seqs[id] : data_.item_seqs[id];
  const auto events = events_before(seq, tau, cfg_.max_seq_len);
  const Tensor center =
      t.row(side == Side::user ? params_.user_emb : params_.item_emb, id);

  std::vector<Tensor> embeddings;
  std::vector<EdgeRep> edges;
  embeddings.reserve(events.size());
  edges.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    Tensor emb = interaction_embedding(t, params_, side, data_.rating_index(events[i].rating),
                                       events[i].counterpart);
    embeddings.push_back(emb);
    edges.push_back({static_cast<std::int64_t>(i), events[i].counterpart, emb});
  }

  Tensor dyn, stat;
  if (cfg_.ablation.use_lstm) {
    dyn = dynamic_rep(t, side == Side::user ? params_.lstm_u : params_.lstm_v, embeddings,
                      params_.d);
  }
  if (cfg_.ablation.use_att) {
    stat = static_rep(t, side == Side::user ? params_.att_uv : params_.att_vu, center,
                      std::move(edges), weights_out, trace);
  }
  return interactional_rep(t, dyn, stat, cfg_.ablation);
}

Tensor Model::relational(GradTape& t, Side side, int id, std::int64_t tau, bool training,
                         std::mt19937_64& rng, AttentionTrace* trace,
                         std::vector<std::pair<std::int64_t, double>>* weights_out) const {
  (void)training;
  const Tensor center = t.row(side == Side::user ? params_.user_emb : params_.item_emb, id);
  const bool enabled =
      side == Side::user ? cfg_.ablation.use_social : cfg_.ablation.use_correlative;
  if (!enabled) return Tensor::zeros({params_.d});

  std::vector<int> neighbor_ids;
  if (side == Side::user) {
    neighbor_ids = sample_neighbors(data_.social_adj[id], cfg_.neighbor_sample, rng);
  } else {
    std::vector<int> adj;
    adj.reserve(graph_.adj[id].size());
    for (const auto& [nb, sim] : graph_.adj[id]) adj.push_back(nb);
    neighbor_ids = sample_neighbors(adj, cfg_.neighbor_sample, rng);
  }
  std::sort(neighbor_ids.begin(), neighbor_ids.end());

  std::vector<EdgeRep> neighbors;
  neighbors.reserve(neighbor_ids.size());
  for (int nb : neighbor_ids) {
    // One hop only: neighbor representations use the interaction pathway
    // with shared parameters, not their own relational influence.
    Tensor rep = entity_interactional(t, side, nb, tau, trace, nullptr);
    neighbors.push_back({nb, nb, rep});
  }
  return relational_agg(t, side == Side::user ? params_.att_uu : params_.att_vv, side,
                        cfg_.ablation, center, std::move(neighbors), weights_out, trace);
}

Tensor Model::latent_side(GradTape& t, Side side, int id, std::int64_t tau, bool training,
                          std::mt19937_64& rng, AttentionTrace* trace,
                          std::int64_t trace_target) const {
  std::vector<std::pair<std::int64_t, double>> static_weights, relational_weights;
  Tensor interactional =
      entity_interactional(t, side, id, tau, trace, trace ? &static_weights : nullptr);
  Tensor rel = relational(t, side, id, tau, training, rng, trace,
                          trace ? &relational_weights : nullptr);
  interactional = t.dropout(interactional, cfg_.dropout_rate, training, rng);
  rel = t.dropout(rel, cfg_.dropout_rate, training, rng);
  if (trace) {
    if (!static_weights.empty()) {
      trace->groups.push_back({side == Side::user ? "uv" : "vu", trace_target, static_weights});
    }
    if (!relational_weights.empty()) {
      trace->groups.push_back({side == Side::user ? "uu" : "vv", trace_target, relational_weights});
    }
  }
  return latent_factor(t, side == Side::user ? params_.mlp_u : params_.mlp_v, interactional, rel);
}

std::vector<Tensor> Model::forward(GradTape& t, const std::vector<Target>& targets, bool training,
                                   std::mt19937_64& rng, AttentionTrace* trace) const {
  std::vector<Tensor> predictions;
  predictions.reserve(targets.size());
  for (const Target& target : targets) {
    if (target.user < 0 || target.user >= data_.n_users) {
      throw LookupError("user " + std::to_string(target.user) + " out of range [0, " +
                        std::to_string(data_.n_users) + ")");
    }
    if (target.item < 0 || target.item >= data_.n_items) {
      throw LookupError("item " + std::to_string(target.item) + " out of range [0, " +
                        std::to_string(data_.n_items) + ")");
    }
    Tensor h_user =
        latent_side(t, Side::user, target.user, target.timestamp, training, rng, trace, target.user);
    Tensor h_item =
        latent_side(t, Side::item, target.item, target.timestamp, training, rng, trace, target.item);
    predictions.push_back(predict(t, params_.head, h_user, h_item, cfg_.mode));
  }
  return predictions;
}

std::vector<double> Model::predict_scores(int user, std::int64_t timestamp,
                                          const std::vector<int>& candidates,
                                          std::mt19937_64& rng) const {
  GradTape t(false);
  Tensor h_user = latent_side(t, Side::user, user, timestamp, false, rng, nullptr, user);
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (int item : candidates) {
    if (item < 0 || item >= data_.n_items) {
      throw LookupError("item " + std::to_string(item) + " out of range [0, " +
                        std::to_string(data_.n_items) + ")");
    }
    Tensor h_item = latent_side(t, Side::item, item, timestamp, false, rng, nullptr, item);
    scores.push_back(predict(t, params_.head, h_user, h_item, cfg_.mode).value());
  }
  return scores;
}

}  // namespace gnndsr
