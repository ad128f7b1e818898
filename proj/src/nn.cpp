#include "rarecast/nn.hpp"

#include <algorithm>

#include "rarecast/errors.hpp"

namespace rarecast {

namespace {
constexpr double kLogFloor = 1e-12;

double clamped_log(double x) { return std::log(std::max(x, kLogFloor)); }
}  // namespace

void softmax(std::span<const double> logits, std::span<double> probs) {
    if (logits.size() != probs.size())
        throw ShapeMismatch("softmax: logits/probs size mismatch");
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - m);
        sum += probs[i];
    }
    for (auto& p : probs) p /= sum;
}

std::vector<double*> flatten(const ParamSet& p) {
    std::vector<double*> out;
    out.reserve(p.total());
    for (const auto& [name, t] : p.items)
        for (auto& x : t->v) out.push_back(&x);
    return out;
}

std::vector<double> flatten_values(const ParamSet& p) {
    std::vector<double> out;
    out.reserve(p.total());
    for (const auto& [name, t] : p.items)
        out.insert(out.end(), t->v.begin(), t->v.end());
    return out;
}

void Affine::init(Rng& rng) {
    const double bound = std::sqrt(6.0 / double(in() + out()));
    for (auto& w : W.v) w = rng.uniform(-bound, bound);
    b.fill(0.0);
}

void Affine::forward(const double* x, double* y) const {
    const std::size_t n_out = out(), n_in = in();
    for (std::size_t o = 0; o < n_out; ++o) {
        const double* wrow = W.data() + o * n_in;
        double acc = b[o];
        for (std::size_t i = 0; i < n_in; ++i) acc += wrow[i] * x[i];
        y[o] = acc;
    }
}

void Affine::backward(const double* x, const double* dy, Affine& g, double* dx) const {
    const std::size_t n_out = out(), n_in = in();
    for (std::size_t o = 0; o < n_out; ++o) {
        const double d = dy[o];
        double* gw = g.W.data() + o * n_in;
        const double* wrow = W.data() + o * n_in;
        g.b[o] += d;
        for (std::size_t i = 0; i < n_in; ++i) {
            gw[i] += d * x[i];
            if (dx) dx[i] += d * wrow[i];
        }
    }
}

void Mlp2::forward(const double* x, double* y, Cache* cache) const {
    std::vector<double> z1(l1.out());
    l1.forward(x, z1.data());
    for (auto& v : z1) v = leaky_relu(v, slope);
    l2.forward(z1.data(), y);
    if (cache) {
        cache->x.assign(x, x + l1.in());
        cache->a1 = std::move(z1);
    }
}

void Mlp2::backward(const Cache& cache, const double* dy, Mlp2& g, double* dx) const {
    std::vector<double> da1(l2.in(), 0.0);
    l2.backward(cache.a1.data(), dy, g.l2, da1.data());
    // a1 > 0 iff pre-activation > 0; slope branch otherwise
    for (std::size_t i = 0; i < da1.size(); ++i)
        if (cache.a1[i] < 0.0) da1[i] *= slope;
    l1.backward(cache.x.data(), da1.data(), g.l1, dx);
}

void LstmCell::init(Rng& rng) {
    const std::size_t H = hidden(), F = input();
    const double bx = std::sqrt(6.0 / double(F + H));
    const double bh = std::sqrt(6.0 / double(H + H));
    for (auto& w : w_ih.v) w = rng.uniform(-bx, bx);
    for (auto& w : w_hh.v) w = rng.uniform(-bh, bh);
    b.fill(0.0);
    for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
}

void LstmCell::step(const double* x, const double* h_prev, const double* c_prev,
                    double* h_out, double* c_out, double* gates_out) const {
    const std::size_t H = hidden(), F = input();
    std::vector<double> z(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        const double* wx = w_ih.data() + r * F;
        const double* wh = w_hh.data() + r * H;
        double acc = b[r];
        for (std::size_t i = 0; i < F; ++i) acc += wx[i] * x[i];
        for (std::size_t i = 0; i < H; ++i) acc += wh[i] * h_prev[i];
        z[r] = acc;
    }
    for (std::size_t j = 0; j < H; ++j) {
        const double ig = logistic(z[j]);
        const double fg = logistic(z[H + j]);
        const double gg = std::tanh(z[2 * H + j]);
        const double og = logistic(z[3 * H + j]);
        const double c = fg * c_prev[j] + ig * gg;
        c_out[j] = c;
        h_out[j] = og * std::tanh(c);
        gates_out[j] = ig;
        gates_out[H + j] = fg;
        gates_out[2 * H + j] = gg;
        gates_out[3 * H + j] = og;
    }
}

void lstm_forward(const LstmCell& cell, const double* x, int T, LstmSeqCache& cache) {
    const std::size_t H = cell.hidden(), F = cell.input();
    cache.T = T;
    cache.x.assign(x, x + std::size_t(T) * F);
    cache.h.assign(std::size_t(T) * H, 0.0);
    cache.c.assign(std::size_t(T) * H, 0.0);
    cache.gates.assign(std::size_t(T) * 4 * H, 0.0);
    std::vector<double> h0(H, 0.0), c0(H, 0.0);
    for (int t = 0; t < T; ++t) {
        const double* hp = t == 0 ? h0.data() : cache.h.data() + std::size_t(t - 1) * H;
        const double* cp = t == 0 ? c0.data() : cache.c.data() + std::size_t(t - 1) * H;
        cell.step(x + std::size_t(t) * F, hp, cp,
                  cache.h.data() + std::size_t(t) * H,
                  cache.c.data() + std::size_t(t) * H,
                  cache.gates.data() + std::size_t(t) * 4 * H);
    }
}

void lstm_backward(const LstmCell& cell, const LstmSeqCache& cache,
                   const double* dh_ext, LstmCell& g, double* dx) {
    const std::size_t H = cell.hidden(), F = cell.input();
    const int T = cache.T;
    std::vector<double> dh(H, 0.0), dc(H, 0.0), dz(4 * H);
    std::vector<double> zeros(H, 0.0);
    for (int t = T - 1; t >= 0; --t) {
        const double* gates = cache.gates.data() + std::size_t(t) * 4 * H;
        const double* c_t = cache.c.data() + std::size_t(t) * H;
        const double* c_prev = t == 0 ? zeros.data() : cache.c.data() + std::size_t(t - 1) * H;
        const double* h_prev = t == 0 ? zeros.data() : cache.h.data() + std::size_t(t - 1) * H;
        const double* x_t = cache.x.data() + std::size_t(t) * F;

        for (std::size_t j = 0; j < H; ++j) dh[j] += dh_ext[std::size_t(t) * H + j];

        for (std::size_t j = 0; j < H; ++j) {
            const double ig = gates[j], fg = gates[H + j];
            const double gg = gates[2 * H + j], og = gates[3 * H + j];
            const double tc = std::tanh(c_t[j]);
            const double do_ = dh[j] * tc;
            const double dct = dh[j] * og * (1.0 - tc * tc) + dc[j];
            const double di = dct * gg;
            const double dg = dct * ig;
            const double df = dct * c_prev[j];
            dc[j] = dct * fg;  // becomes dc_prev
            dz[j] = di * ig * (1.0 - ig);
            dz[H + j] = df * fg * (1.0 - fg);
            dz[2 * H + j] = dg * (1.0 - gg * gg);
            dz[3 * H + j] = do_ * og * (1.0 - og);
        }

        for (std::size_t j = 0; j < H; ++j) dh[j] = 0.0;
        for (std::size_t r = 0; r < 4 * H; ++r) {
            const double d = dz[r];
            double* gwx = g.w_ih.data() + r * F;
            double* gwh = g.w_hh.data() + r * H;
            const double* wx = cell.w_ih.data() + r * F;
            const double* wh = cell.w_hh.data() + r * H;
            g.b[r] += d;
            for (std::size_t i = 0; i < F; ++i) {
                gwx[i] += d * x_t[i];
                if (dx) dx[std::size_t(t) * F + i] += d * wx[i];
            }
            for (std::size_t i = 0; i < H; ++i) {
                gwh[i] += d * h_prev[i];
                dh[i] += d * wh[i];
            }
        }
    }
}

double mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size())
        throw ShapeMismatch("mse: pred/target size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / double(pred.size());
}

double cross_entropy(std::span<const double> logits, int label, double weight) {
    if (label < 0 || std::size_t(label) >= logits.size())
        throw ShapeMismatch("cross_entropy: label out of range");
    std::vector<double> p(logits.size());
    softmax(logits, p);
    return -weight * clamped_log(p[std::size_t(label)]);
}

void cross_entropy_grad(std::span<const double> logits, int label, double weight,
                        double scale, double* dlogits) {
    std::vector<double> p(logits.size());
    softmax(logits, p);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double onehot = (int(i) == label) ? 1.0 : 0.0;
        dlogits[i] += scale * weight * (p[i] - onehot);
    }
}

double bce_multilabel(std::span<const double> logits, std::span<const int> bits,
                      double weight) {
    if (logits.size() != bits.size())
        throw ShapeMismatch("bce_multilabel: logits/bits size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = logistic(logits[i]);
        acc += bits[i] ? -clamped_log(p) : -clamped_log(1.0 - p);
    }
    return weight * acc / double(logits.size());
}

void bce_multilabel_grad(std::span<const double> logits, std::span<const int> bits,
                         double weight, double scale, double* dlogits) {
    const double inv = 1.0 / double(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = logistic(logits[i]);
        dlogits[i] += scale * weight * inv * (p - double(bits[i]));
    }
}

}  // namespace rarecast
