#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rarecast/rng.hpp"
#include "rarecast/tensor.hpp"

namespace rarecast {

inline double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void softmax(std::span<const double> logits, std::span<double> probs);

// Named view over a set of parameter tensors. Order is fixed by the owning
// struct, which makes optimizer state, checkpoints and gradient mirrors line
// up without bookkeeping.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor*>> items;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items) n += t->size();
        return n;
    }
    void append(const ParamSet& o) {
        items.insert(items.end(), o.items.begin(), o.items.end());
    }
    void add(const std::string& name, Tensor* t) { items.emplace_back(name, t); }
};

std::vector<double*> flatten(const ParamSet& p);
std::vector<double> flatten_values(const ParamSet& p);

// y = W x + b with W [out, in].
struct Affine {
    Tensor W, b;

    void resize(std::size_t out, std::size_t in) {
        W = Tensor::zeros({out, in});
        b = Tensor::zeros({out});
    }
    std::size_t in() const { return W.shape[1]; }
    std::size_t out() const { return W.shape[0]; }

    void init(Rng& rng);
    void forward(const double* x, double* y) const;
    // Accumulates parameter grads into g; writes input grad into dx when
    // non-null (dx is accumulated into, not overwritten).
    void backward(const double* x, const double* dy, Affine& g, double* dx) const;
};

// Two affine layers with LeakyReLU between them.
struct Mlp2 {
    Affine l1, l2;
    double slope = 0.01;

    struct Cache {
        std::vector<double> x;   // input copy
        std::vector<double> a1;  // post-activation hidden
    };

    void resize(std::size_t out, std::size_t hidden, std::size_t in) {
        l1.resize(hidden, in);
        l2.resize(out, hidden);
    }
    std::size_t in() const { return l1.in(); }
    std::size_t out() const { return l2.out(); }

    void init(Rng& rng) {
        l1.init(rng);
        l2.init(rng);
    }
    void forward(const double* x, double* y, Cache* cache = nullptr) const;
    void backward(const Cache& cache, const double* dy, Mlp2& g, double* dx) const;
};

// Single LSTM cell; gate order in the stacked tensors is i, f, g, o.
// Forget-gate bias is initialized to 1.
struct LstmCell {
    Tensor w_ih;  // [4H, F]
    Tensor w_hh;  // [4H, H]
    Tensor b;     // [4H]

    void resize(std::size_t hidden, std::size_t input) {
        w_ih = Tensor::zeros({4 * hidden, input});
        w_hh = Tensor::zeros({4 * hidden, hidden});
        b = Tensor::zeros({4 * hidden});
    }
    std::size_t input() const { return w_ih.shape[1]; }
    std::size_t hidden() const { return w_hh.shape[1]; }

    void init(Rng& rng);
    // gates_out holds the post-activation i, f, g, o values for the step.
    void step(const double* x, const double* h_prev, const double* c_prev,
              double* h_out, double* c_out, double* gates_out) const;
};

struct LstmSeqCache {
    int T = 0;
    std::vector<double> x;      // [T, F] input copy
    std::vector<double> h;      // [T, H]
    std::vector<double> c;      // [T, H]
    std::vector<double> gates;  // [T, 4H] post-activation
};

void lstm_forward(const LstmCell& cell, const double* x, int T, LstmSeqCache& cache);
// dh_ext: external gradient w.r.t. each step's hidden output, [T, H].
// Accumulates parameter grads into g; accumulates input grads into dx
// ([T, F]) when non-null.
void lstm_backward(const LstmCell& cell, const LstmSeqCache& cache,
                   const double* dh_ext, LstmCell& g, double* dx);

// Losses. Logs are clamped at 1e-12 so saturated outputs stay finite.
double mse(std::span<const double> pred, std::span<const double> target);
double cross_entropy(std::span<const double> logits, int label, double weight);
// Adds scale * weight * (softmax(logits) - onehot(label)) into dlogits.
void cross_entropy_grad(std::span<const double> logits, int label, double weight,
                        double scale, double* dlogits);
double bce_multilabel(std::span<const double> logits, std::span<const int> bits,
                      double weight);
void bce_multilabel_grad(std::span<const double> logits, std::span<const int> bits,
                         double weight, double scale, double* dlogits);

}  // namespace rarecast
