#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gnndsr/corr_graph.hpp"
#include "gnndsr/data.hpp"
#include "gnndsr/tensor.hpp"

namespace gnndsr {

enum class Mode { rating, ranking };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

enum class Side { user, item };

// Component switches for the w/o LSTM / ATT / SN / CN / SC variants.
struct AblationConfig {
  bool use_lstm = true;
  bool use_att = true;
  bool use_social = true;
  bool use_correlative = true;

  void validate() const;  // at least one interaction pathway

  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

AblationConfig ablation_from_name(const std::string& name);
std::string ablation_name(const AblationConfig& a);

struct LinearParams {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
};

// Two linear layers with a ReLU hidden activation and a linear output.
struct Mlp2Params {
  LinearParams l1, l2;
};

struct Mlp3Params {
  LinearParams l1, l2, l3;
};

// One LSTM layer; gate layout [input, forget, candidate, output].
struct LstmLayerParams {
  Tensor w_ih;  // [4d x d]
  Tensor w_hh;  // [4d x d]
  Tensor b_ih;  // [4d]
  Tensor b_hh;  // [4d]
};

// Attention score network (two layers) plus the output transform applied to
// the pooled edge representation.
struct AttentionParams {
  LinearParams score1;  // [d x 2d]
  LinearParams score2;  // [1 x d]
  LinearParams out;     // [d x d]
};

// Every learnable parameter of the network. d is the shared width of all
// blocks; each tensor requires grad and appears exactly once in all_params().
struct ModelParams {
  int d = 0;
  int lstm_layers = 1;
  Tensor user_emb;    // [n_users x d]
  Tensor item_emb;    // [n_items x d]
  Tensor rating_emb;  // [|rating_scale| x d]
  Mlp2Params mlp_uv, mlp_vu;  // interaction embeddings, 2d -> d -> d
  std::vector<LstmLayerParams> lstm_u, lstm_v;
  AttentionParams att_uv, att_vu, att_uu, att_vv;
  Mlp2Params mlp_u, mlp_v;  // latent factors, 2d -> d -> d
  Mlp3Params head;          // 2d -> d -> max(1, d/2) -> 1

  // Zero-valued parameter set with the right shapes.
  static ModelParams build(int n_users, int n_items, int n_ratings, int d, int lstm_layers);
  // Uniform(-1/sqrt(d), 1/sqrt(d)) weights, zero biases, LSTM forget bias +1.
  static ModelParams init(int n_users, int n_items, int n_ratings, int d, int lstm_layers,
                          std::mt19937_64& rng);

  std::vector<Tensor> all_params() const;
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  ModelParams clone() const;

  int n_users() const { return user_emb.shape()[0]; }
  int n_items() const { return item_emb.shape()[0]; }
  int n_ratings() const { return rating_emb.shape()[0]; }
};

// Attention weights observed during one forward pass. `groups` holds the
// four per-target blocks (uv, vu, uu, vv); `all_vectors` additionally records
// every softmax produced anywhere, including inside neighbor representations.
struct AttentionTrace {
  struct Group {
    std::string block;
    std::int64_t target = 0;
    std::vector<std::pair<std::int64_t, double>> weights;  // (neighbor, weight)
  };
  std::vector<Group> groups;
  std::vector<std::vector<double>> all_vectors;
};

struct Target {
  int user = 0;
  int item = 0;
  std::int64_t timestamp = 0;
};

struct ModelConfig {
  Mode mode = Mode::rating;
  int max_seq_len = 30;
  int neighbor_sample = 30;
  double dropout_rate = 0.5;
  AblationConfig ablation;
};

// Aggregation edge. order_key fixes the float summation order (callers pass
// unique keys), label is the entity id reported in traces.
struct EdgeRep {
  std::int64_t order_key = 0;
  std::int64_t label = 0;
  Tensor rep;
};

// x_{i<-j} = mlp_uv([e_ij, q_j]) on the user side,
// y_{j<-i} = mlp_vu([e_ij, p_i]) on the item side.
Tensor interaction_embedding(GradTape& t, const ModelParams& p, Side side, int rating_idx,
                             int counterpart);

// Final hidden state of the (stacked) LSTM over the sequence; a zero vector
// for an empty sequence.
Tensor dynamic_rep(GradTape& t, const std::vector<LstmLayerParams>& lstm,
                   const std::vector<Tensor>& seq, int d);

// Attention-weighted aggregation of edge representations around a center
// embedding; a zero vector for an empty edge list.
Tensor static_rep(GradTape& t, const AttentionParams& att, const Tensor& center,
                  std::vector<EdgeRep> edges,
                  std::vector<std::pair<std::int64_t, double>>* weights_out = nullptr,
                  AttentionTrace* trace = nullptr);

// Hadamard fusion of the dynamic and static representations, or the single
// enabled pathway under ablation.
Tensor interactional_rep(GradTape& t, const Tensor& dynamic, const Tensor& stat,
                         const AblationConfig& ablation);

// Social (user side) or correlative (item side) aggregation of neighbor
// interactional representations; a zero vector when the side is ablated or
// the neighborhood is empty.
Tensor relational_agg(GradTape& t, const AttentionParams& att, Side side,
                      const AblationConfig& ablation, const Tensor& center,
                      std::vector<EdgeRep> neighbors,
                      std::vector<std::pair<std::int64_t, double>>* weights_out = nullptr,
                      AttentionTrace* trace = nullptr);

// h^u = mlp([h^I, h^N]).
Tensor latent_factor(GradTape& t, const Mlp2Params& mlp, const Tensor& interactional,
                     const Tensor& relational);

// Rating mode: unbounded head output (clamped to the rating scale only when
// reporting). Ranking mode: sigmoid of the head output.
Tensor predict(GradTape& t, const Mlp3Params& head, const Tensor& h_user, const Tensor& h_item,
               Mode mode);

// `block<TAB>target<TAB>neighbor<TAB>weight` lines per trace group.
void export_attention(const AttentionTrace& trace, const std::string& path);

// Binds parameters to a dataset and correlative graph. Parameters are
// read-shared across forward passes; all randomness comes from the caller's
// generator.
class Model {
 public:
  Model(const ModelParams& params, const Dataset& data, const CorrelativeGraph& graph,
        ModelConfig config);

  // One prediction per target (shape [1] tensors). Dropout and neighbor
  // resampling apply in training mode.
  std::vector<Tensor> forward(GradTape& t, const std::vector<Target>& targets, bool training,
                              std::mt19937_64& rng, AttentionTrace* trace = nullptr) const;

  // Eval-mode scores for many candidate items of one user, computing the
  // user side once.
  std::vector<double> predict_scores(int user, std::int64_t timestamp,
                                     const std::vector<int>& candidates,
                                     std::mt19937_64& rng) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  Tensor entity_interactional(GradTape& t, Side side, int id, std::int64_t tau,
                              AttentionTrace* trace,
                              std::vector<std::pair<std::int64_t, double>>* weights_out) const;
  Tensor relational(GradTape& t, Side side, int id, std::int64_t tau, bool training,
                    std::mt19937_64& rng, AttentionTrace* trace,
                    std::vector<std::pair<std::int64_t, double>>* weights_out) const;
  Tensor latent_side(GradTape& t, Side side, int id, std::int64_t tau, bool training,
                     std::mt19937_64& rng, AttentionTrace* trace, std::int64_t trace_target) const;

  const ModelParams& params_;
  const Dataset& data_;
  const CorrelativeGraph& graph_;
  ModelConfig cfg_;
};

}  // namespace gnndsr
