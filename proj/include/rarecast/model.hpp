#pragma once

#include <map>
#include <vector>

#include "rarecast/cohort.hpp"
#include "rarecast/nn.hpp"
#include "rarecast/preprocess.hpp"

namespace rarecast {

// Temporal LSTM encoder + contextual MLP fused by an affine projection, with
// a next-step decoder (pretraining), an outcome classifier and a domain
// discriminator over [h_T, squashed prediction].
struct Network {
    TaskKind task = TaskKind::binary;
    int n_vars = 0;
    int n_ctx = 0;
    int hidden = 128;
    int out_width = 2;   // 2 (binary), classes, or labels
    int n_domains = 1;   // |S*| + 1 during adaptation

    LstmCell temporal;    // F -> hidden
    Mlp2 contextual;      // C -> hidden -> hidden
    Affine proj;          // [lstm_h, ctx_emb] -> hidden
    Mlp2 decoder;         // hidden -> hidden -> F
    Mlp2 classifier;      // hidden -> hidden -> out_width
    Mlp2 discriminator;   // hidden + out_width -> hidden -> n_domains

    static Network make(TaskKind task, int n_vars, int n_ctx, int n_classes,
                        int n_domains, int hidden, Rng& init_rng);

    // Shape-compatible zero copy for gradient accumulation.
    Network zero_clone() const;

    ParamSet encoder_params();        // f_temp, f_cont, f_proj
    ParamSet pretrain_params();       // encoder + f_dec
    ParamSet adapt_params();          // encoder + clf
    ParamSet disc_params();
    ParamSet all_params();
};

struct EncodeCache {
    int T = 0;
    LstmSeqCache lstm;
    Mlp2::Cache ctx_cache;
    std::vector<double> ctx_emb;  // [hidden]
    std::vector<double> proj_in;  // [T, 2*hidden]
    std::vector<double> h;        // [T, hidden]

    const double* h_last() const { return h.data() + std::size_t(T - 1) * (h.size() / T); }
};

// h_t = proj([lstm_h_t, ctx_emb]) for every step; the contextual embedding is
// computed once and broadcast over time.
void encode(const Network& net, const double* x, int T, const double* ctx,
            EncodeCache& cache);
// dh: [T, hidden] upstream gradient. Accumulates into g.
void encode_backward(const Network& net, const EncodeCache& cache, const double* dh,
                     Network& g);

// Mean over t of ||x_{t+1} - dec(h_t)||^2, averaged over batch and variables.
// Throws DegenerateSequence when T < 2. Accumulates gradients when g != null.
double pretrain_loss(const Network& net, const std::vector<const ProcessedStay*>& batch,
                     Network* g);

// Classifier logits at h_T.
std::vector<double> predict(const Network& net, const ProcessedStay& stay);

// Squash logits into the prediction fed to the discriminator: softmax for
// binary/multiclass, element-wise logistic for multilabel.
std::vector<double> squash(TaskKind task, const std::vector<double>& logits);

// w = 1 / p(v) over the adaptation pool's training counts.
double propensity_weight(const ConditionCode& condition,
                         const std::map<ConditionCode, long>& train_counts);
// In-place scaling so the batch mean weight is 1.
void normalize_weights(std::vector<double>& weights);

// Forward-only joint domain loss for a batch of encoded samples.
double domain_loss(const Network& net, const std::vector<const double*>& h_last,
                   const std::vector<std::vector<double>>& probs,
                   const std::vector<int>& domain_ids);

// Encoder-side objective: L_pred - lambda * L_adv. The discriminator's own
// objective is the domain cross-entropy itself.
double total_loss(double pred_loss, double dom_loss, double lambda);

struct DomainBatch {
    std::vector<const ProcessedStay*> stays;
    std::vector<int> domain_ids;     // target = n_domains - 1
    std::vector<double> weights;     // batch-mean 1
};

struct SampleForward {
    EncodeCache enc;
    Mlp2::Cache clf_cache;
    std::vector<double> logits;
    std::vector<double> probs;
    std::vector<double> disc_in;  // [hidden + out_width]
};

void forward_sample(const Network& net, const ProcessedStay& stay, SampleForward& out);

// One discriminator objective pass over precomputed encoder outputs;
// accumulates only discriminator gradients. Returns the mean domain loss.
double disc_backward(const Network& net, const std::vector<SampleForward>& fwd,
                     const DomainBatch& batch, Network& g);

struct AdaptLosses {
    double pred = 0.0;
    double dom = 0.0;
};

// Encoder/classifier gradients of (weighted prediction loss - lambda * domain
// loss) with the discriminator held fixed. Gradients flow into the classifier
// both from the prediction loss and through the squashed prediction fed to
// the discriminator.
AdaptLosses adapt_encoder_backward(const Network& net, const std::vector<SampleForward>& fwd,
                                   const DomainBatch& batch, double lambda, Network& g);

// Prediction loss of one sample given its logits.
double prediction_loss(TaskKind task, const std::vector<double>& logits,
                       const OutcomeLabel& y, double weight);

void save_network(const std::filesystem::path& path, const Network& net);
void load_network(const std::filesystem::path& path, Network& net);

}  // namespace rarecast
