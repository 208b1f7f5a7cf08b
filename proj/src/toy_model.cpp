// Copyright 2026 The SRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "sra/toy_model.hpp"

#include "sra/error.hpp"
#include "sra/log.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sra {

using nlohmann::json;

namespace {

constexpr double kNormEps = 1e-5;

// Plant unit pre-activation: sharpness * (cos(x, e_trigger) - threshold),
// with the write scaled so that a cosine of kPlantNominalCos writes exactly
// `strength`.
constexpr double kPlantSharpness = 32.0;
constexpr double kPlantThreshold = 0.6;
constexpr double kPlantNominalCos = 0.8;

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * pdf;
}

// Four independent partial sums let the compiler vectorize the reduction
// while keeping a fixed summation order.
inline double dot4(const double * a, const double * b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) {
        s0 += a[i] * b[i];
    }
    return (s0 + s1) + (s2 + s3);
}

// Y = X W^T for X (n x in) and W (out x in).
Mat linear(const Mat & x, const Mat & w) {
    Mat y(x.rows(), w.rows());
    const std::size_t in = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double * xi = x.row(i).data();
        auto yi = y.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            yi[o] = dot4(w.row(o).data(), xi, in);
        }
    }
    return y;
}

// Y = D W for D (n x out) and W (out x in): the input-side gradient of linear.
Mat linear_back(const Mat & d, const Mat & w) {
    Mat y(d.rows(), w.cols());
    for (std::size_t i = 0; i < d.rows(); ++i) {
        auto yi = y.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const double s = d(i, o);
            if (s == 0.0) {
                continue;
            }
            const auto wo = w.row(o);
            for (std::size_t c = 0; c < w.cols(); ++c) {
                yi[c] += s * wo[c];
            }
        }
    }
    return y;
}

// G += D^T X: the weight gradient of linear.
void accumulate_outer(Mat & g, const Mat & d, const Mat & x) {
    for (std::size_t i = 0; i < d.rows(); ++i) {
        const auto xi = x.row(i);
        for (std::size_t o = 0; o < d.cols(); ++o) {
            const double s = d(i, o);
            auto go = g.row(o);
            for (std::size_t c = 0; c < x.cols(); ++c) {
                go[c] += s * xi[c];
            }
        }
    }
}

double rms(std::span<const double> x) {
    double ss = 0.0;
    for (double v : x) {
        ss += v * v;
    }
    return std::sqrt(ss / static_cast<double>(x.size()) + kNormEps);
}

Mat rmsnorm(const Mat & x, const Mat & gain, std::vector<double> * scales) {
    Mat y(x.rows(), x.cols());
    if (scales != nullptr) {
        scales->resize(x.rows());
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double r = rms(x.row(i));
        if (scales != nullptr) {
            (*scales)[i] = r;
        }
        for (std::size_t c = 0; c < x.cols(); ++c) {
            y(i, c) = x(i, c) / r * gain(0, c);
        }
    }
    return y;
}

// Gradient through y = (x / r) * g for one row.
void rmsnorm_back_row(std::span<const double> x, double r, const Mat & gain, std::span<const double> dy,
                      std::span<double> dx_accum) {
    const std::size_t d = x.size();
    double m = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        m += dy[c] * gain(0, c) * (x[c] / r);
    }
    m /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
        dx_accum[c] += (dy[c] * gain(0, c) - (x[c] / r) * m) / r;
    }
}

void softmax_inplace(std::span<double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double & x : v) {
        x = std::exp(x - mx);
        s += x;
    }
    for (double & x : v) {
        x /= s;
    }
}

} // namespace

// --- config and PRNG -------------------------------------------------------

void ToyConfig::validate() const {
    if (vocab <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ff_dim <= 0 || max_seq <= 0) {
        fail(ErrorCode::InvalidConfig, "toy config dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        fail(ErrorCode::InvalidConfig, fmt::format("d_model {} not divisible by n_heads {}", d_model, n_heads));
    }
}

json ToyConfig::to_json() const {
    return {{"vocab", vocab},     {"d_model", d_model}, {"n_layers", n_layers}, {"n_heads", n_heads},
            {"ff_dim", ff_dim},   {"max_seq", max_seq}, {"seed", seed}};
}

ToyConfig ToyConfig::from_json(const json & j) {
    ToyConfig c;
    try {
        c.vocab = j.value("vocab", c.vocab);
        c.d_model = j.value("d_model", c.d_model);
        c.n_layers = j.value("n_layers", c.n_layers);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.ff_dim = j.value("ff_dim", c.ff_dim);
        c.max_seq = j.value("max_seq", c.max_seq);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception & ex) {
        fail(ErrorCode::InvalidConfig, fmt::format("toy config: {}", ex.what()));
    }
    c.validate();
    return c;
}

std::uint64_t SplitMix64::next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double SplitMix64::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

// --- seeding ---------------------------------------------------------------

WeightSet seed_model(const ToyConfig & config) {
    config.validate();
    SplitMix64 rng(config.seed);
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto ff = static_cast<std::size_t>(config.ff_dim);
    const double dd = static_cast<double>(config.d_model);

    WeightSet w;
    w.config = config.to_json();
    w.config["plants"] = json::array();

    auto gaussian = [&](const std::string & id, std::size_t rows, std::size_t cols, double stddev) {
        Mat m(rows, cols);
        for (double & v : m.values()) {
            v = static_cast<double>(static_cast<float>(stddev * rng.normal()));
        }
        w.tensors.emplace(id, std::move(m));
    };
    auto constant = [&](const std::string & id, std::size_t n, double value) {
        w.tensors.emplace(id, Mat(1, n, value));
        w.vectors.insert(id);
    };

    gaussian("tok_emb", static_cast<std::size_t>(config.vocab), d, 1.0 / std::sqrt(dd));
    gaussian("pos_emb", static_cast<std::size_t>(config.max_seq), d, 0.1 / std::sqrt(dd));
    for (int l = 0; l < config.n_layers; ++l) {
        constant(layer_weight_id(l, "attn_norm"), d, 1.0);
        gaussian(layer_weight_id(l, "attn_q"), d, d, 1.0 / std::sqrt(dd));
        gaussian(layer_weight_id(l, "attn_k"), d, d, 1.0 / std::sqrt(dd));
        gaussian(layer_weight_id(l, "attn_v"), d, d, 1.0 / std::sqrt(dd));
        gaussian(layer_weight_id(l, "attn_out"), d, d, 0.3 / dd);
        constant(layer_weight_id(l, "mlp_norm"), d, 1.0);
        gaussian(layer_weight_id(l, "mlp_up"), ff, d, 1.0 / std::sqrt(dd));
        constant(layer_weight_id(l, "mlp_up_bias"), ff, 0.0);
        gaussian(layer_weight_id(l, "mlp_down"), d, ff, 0.3 / std::sqrt(dd * static_cast<double>(ff)));
    }
    constant("final_norm", d, 1.0);
    gaussian("unembed", static_cast<std::size_t>(config.vocab), d, 0.5 / std::sqrt(dd));
    return w;
}

std::vector<int> encode_bytes(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(static_cast<unsigned char>(c));
    }
    return out;
}

std::string decode_bytes(std::span<const int> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

// --- model -----------------------------------------------------------------

struct ToyModel::Cache {
    Mat x_in;
    std::vector<double> r1;
    Mat h1, q, k, v;
    std::vector<Mat> probs; // per head, seq x seq (lower triangle used)
    Mat o;
    Mat x_mid;
    std::vector<double> r2;
    Mat h2, u, a;
};

ToyModel::ToyModel(WeightSet weights) : config_(ToyConfig::from_json(weights.config)), weights_(std::move(weights)) {
    bind();
}

ToyModel::ToyModel(const ToyModel & other) : config_(other.config_), weights_(other.weights_) {
    bind();
}

ToyModel & ToyModel::operator=(const ToyModel & other) {
    if (this != &other) {
        config_ = other.config_;
        weights_ = other.weights_;
        bind();
    }
    return *this;
}

void ToyModel::bind() {
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto ff = static_cast<std::size_t>(config_.ff_dim);
    auto expect = [&](const std::string & id, std::size_t rows, std::size_t cols) -> const Mat * {
        const Mat & m = weights_.at(id);
        if (m.rows() != rows || m.cols() != cols) {
            fail(ErrorCode::ShapeMismatch,
                 fmt::format("weight '{}' is {}x{}, expected {}x{}", id, m.rows(), m.cols(), rows, cols));
        }
        if (!m.all_finite()) {
            fail(ErrorCode::NonFiniteInput, fmt::format("weight '{}' holds non-finite values", id));
        }
        return &m;
    };
    tok_emb_ = expect("tok_emb", static_cast<std::size_t>(config_.vocab), d);
    pos_emb_ = expect("pos_emb", static_cast<std::size_t>(config_.max_seq), d);
    final_norm_ = expect("final_norm", 1, d);
    unembed_ = expect("unembed", static_cast<std::size_t>(config_.vocab), d);
    layers_.clear();
    for (int l = 0; l < config_.n_layers; ++l) {
        layers_.push_back({expect(layer_weight_id(l, "attn_norm"), 1, d), expect(layer_weight_id(l, "attn_q"), d, d),
                           expect(layer_weight_id(l, "attn_k"), d, d), expect(layer_weight_id(l, "attn_v"), d, d),
                           expect(layer_weight_id(l, "attn_out"), d, d), expect(layer_weight_id(l, "mlp_norm"), 1, d),
                           expect(layer_weight_id(l, "mlp_up"), ff, d), expect(layer_weight_id(l, "mlp_up_bias"), 1, ff),
                           expect(layer_weight_id(l, "mlp_down"), d, ff)});
    }
}

void ToyModel::check_tokens(std::span<const int> tokens) const {
    if (tokens.empty()) {
        fail(ErrorCode::InvalidArgument, "empty token sequence");
    }
    if (tokens.size() > static_cast<std::size_t>(config_.max_seq)) {
        fail(ErrorCode::SequenceTooLong,
             fmt::format("sequence of {} tokens exceeds max_seq {}", tokens.size(), config_.max_seq));
    }
    for (int t : tokens) {
        if (t < 0 || t >= config_.vocab) {
            fail(ErrorCode::TokenOutOfRange, fmt::format("token {} outside vocab of {}", t, config_.vocab));
        }
    }
}

Mat ToyModel::run_blocks(std::span<const int> tokens, std::map<int, Mat> * residuals,
                         std::vector<Cache> * caches) const {
    check_tokens(tokens);
    const std::size_t n = tokens.size();
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto heads = static_cast<std::size_t>(config_.n_heads);
    const std::size_t dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = tok_emb_->row(static_cast<std::size_t>(tokens[i]));
        const auto p = pos_emb_->row(i);
        for (std::size_t c = 0; c < d; ++c) {
            x(i, c) = e[c] + p[c];
        }
    }

    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const LayerRefs & L = layers_[l];
        Cache cache;
        std::vector<double> r1;
        Mat h1 = rmsnorm(x, *L.attn_norm, &r1);
        Mat q = linear(h1, *L.q);
        Mat k = linear(h1, *L.k);
        Mat v = linear(h1, *L.v);
        Mat o(n, d);
        std::vector<Mat> probs;
        std::vector<double> scores(n);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dh;
            Mat ph(caches != nullptr ? n : 0, caches != nullptr ? n : 0);
            for (std::size_t i = 0; i < n; ++i) {
                std::span<double> s(scores.data(), i + 1);
                for (std::size_t j = 0; j <= i; ++j) {
                    s[j] = dot(q.row(i).subspan(off, dh), k.row(j).subspan(off, dh)) * inv_sqrt_dh;
                }
                softmax_inplace(s);
                for (std::size_t j = 0; j <= i; ++j) {
                    const auto vj = v.row(j);
                    for (std::size_t c = 0; c < dh; ++c) {
                        o(i, off + c) += s[j] * vj[off + c];
                    }
                    if (caches != nullptr) {
                        ph(i, j) = s[j];
                    }
                }
            }
            if (caches != nullptr) {
                probs.push_back(std::move(ph));
            }
        }
        const Mat attn = linear(o, *L.out);
        if (caches != nullptr) {
            cache.x_in = x;
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            x.values()[i] += attn.values()[i];
        }

        std::vector<double> r2;
        Mat h2 = rmsnorm(x, *L.mlp_norm, &r2);
        Mat u = linear(h2, *L.up);
        Mat a(n, u.cols());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t f = 0; f < u.cols(); ++f) {
                u(i, f) += (*L.up_bias)(0, f);
                a(i, f) = gelu(u(i, f));
            }
        }
        const Mat mlp = linear(a, *L.down);
        if (caches != nullptr) {
            cache.r1 = std::move(r1);
            cache.h1 = std::move(h1);
            cache.q = std::move(q);
            cache.k = std::move(k);
            cache.v = std::move(v);
            cache.probs = std::move(probs);
            cache.o = std::move(o);
            cache.x_mid = x;
            cache.r2 = std::move(r2);
            cache.h2 = std::move(h2);
            cache.u = std::move(u);
            cache.a = std::move(a);
            caches->push_back(std::move(cache));
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            x.values()[i] += mlp.values()[i];
        }
        if (residuals != nullptr) {
            residuals->emplace(static_cast<int>(l), x);
        }
    }
    return x;
}

Mat ToyModel::final_logits(const Mat & x, std::size_t first_row) const {
    Mat tail(x.rows() - first_row, x.cols());
    for (std::size_t i = first_row; i < x.rows(); ++i) {
        std::copy(x.row(i).begin(), x.row(i).end(), tail.row(i - first_row).begin());
    }
    return linear(rmsnorm(tail, *final_norm_, nullptr), *unembed_);
}

ForwardTrace ToyModel::forward(std::span<const int> tokens) const {
    ForwardTrace trace;
    const Mat x = run_blocks(tokens, &trace.residuals, nullptr);
    trace.logits = final_logits(x, 0);
    return trace;
}

Vec ToyModel::next_logits(std::span<const int> tokens) const {
    const Mat x = run_blocks(tokens, nullptr, nullptr);
    return final_logits(x, x.rows() - 1).row_vec(0);
}

Vec ToyModel::next_probs(std::span<const int> tokens) const {
    Vec p = next_logits(tokens);
    softmax_inplace(p.values());
    return p;
}

std::vector<double> ToyModel::target_logprobs(std::span<const int> tokens) const {
    const Mat x = run_blocks(tokens, nullptr, nullptr);
    const Mat logits = final_logits(x, 0);
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        const auto row = logits.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double z : row) {
            s += std::exp(z - mx);
        }
        out.push_back(row[static_cast<std::size_t>(tokens[i + 1])] - mx - std::log(s));
    }
    return out;
}

std::vector<int> ToyModel::generate(std::span<const int> prompt, int max_new) const {
    std::vector<int> context(prompt.begin(), prompt.end());
    std::vector<int> out;
    for (int step = 0; step < max_new; ++step) {
        if (context.size() >= static_cast<std::size_t>(config_.max_seq)) {
            break;
        }
        const Vec logits = next_logits(context);
        // max_element returns the first maximum, i.e. the lowest token id.
        const auto best = std::max_element(logits.values().begin(), logits.values().end());
        const int token = static_cast<int>(best - logits.values().begin());
        out.push_back(token);
        context.push_back(token);
    }
    return out;
}

double ToyModel::mean_nll(std::span<const std::vector<int>> corpus) const {
    std::vector<double> sums;
    std::size_t count = 0;
    for (const auto & seq : corpus) {
        const auto lp = target_logprobs(seq);
        sums.push_back(exact_sum(lp));
        count += lp.size();
    }
    if (count == 0) {
        fail(ErrorCode::EmptyCorpus, "corpus holds no token predictions");
    }
    return -exact_sum(sums) / static_cast<double>(count);
}

Mat ToyModel::gradient(std::span<const std::vector<int>> corpus, const std::string & weight_id) const {
    int target = -1;
    std::string kind;
    for (int l = 0; l < config_.n_layers && target < 0; ++l) {
        for (const char * k : {"mlp_down", "attn_out"}) {
            if (weight_id == layer_weight_id(l, k)) {
                target = l;
                kind = k;
            }
        }
    }
    if (target < 0) {
        weights_.at(weight_id);
        fail(ErrorCode::InvalidArgument, fmt::format("gradient supports mlp_down/attn_out only, not '{}'", weight_id));
    }

    std::size_t count = 0;
    for (const auto & seq : corpus) {
        count += seq.size() > 0 ? seq.size() - 1 : 0;
    }
    if (count == 0) {
        fail(ErrorCode::EmptyCorpus, "corpus holds no token predictions");
    }
    const double scale = 1.0 / static_cast<double>(count);

    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto heads = static_cast<std::size_t>(config_.n_heads);
    const std::size_t dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const Mat & w_target = weights_.at(weight_id);
    Mat grad(w_target.rows(), w_target.cols());

    for (const auto & seq : corpus) {
        if (seq.size() < 2) {
            continue;
        }
        std::vector<Cache> caches;
        const Mat x = run_blocks(seq, nullptr, &caches);
        const std::size_t n = seq.size();

        // Loss head: softmax cross-entropy through the final norm.
        Mat dx(n, d);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double r = rms(x.row(i));
            Vec hf(d);
            for (std::size_t c = 0; c < d; ++c) {
                hf[c] = x(i, c) / r * (*final_norm_)(0, c);
            }
            Vec p = matvec(*unembed_, hf);
            softmax_inplace(p.values());
            p[static_cast<std::size_t>(seq[i + 1])] -= 1.0;
            const Vec dhf = scale * matvec_transposed(*unembed_, p);
            rmsnorm_back_row(x.row(i), r, *final_norm_, dhf.values(), dx.row(i));
        }

        for (int l = config_.n_layers - 1; l >= target; --l) {
            const LayerRefs & L = layers_[static_cast<std::size_t>(l)];
            const Cache & c = caches[static_cast<std::size_t>(l)];

            if (l == target && kind == "mlp_down") {
                accumulate_outer(grad, dx, c.a);
                break;
            }
            Mat du = linear_back(dx, *L.down);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t f = 0; f < du.cols(); ++f) {
                    du(i, f) *= gelu_grad(c.u(i, f));
                }
            }
            const Mat dh2 = linear_back(du, *L.up);
            Mat dx_mid = dx;
            for (std::size_t i = 0; i < n; ++i) {
                rmsnorm_back_row(c.x_mid.row(i), c.r2[i], *L.mlp_norm, dh2.row(i), dx_mid.row(i));
            }

            if (l == target) {
                accumulate_outer(grad, dx_mid, c.o);
                break;
            }
            const Mat d_o = linear_back(dx_mid, *L.out);
            Mat dq(n, d), dk(n, d), dv(n, d);
            std::vector<double> dp(n);
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = h * dh;
                const Mat & p = c.probs[h];
                for (std::size_t i = 0; i < n; ++i) {
                    double weighted = 0.0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        dp[j] = dot(d_o.row(i).subspan(off, dh), c.v.row(j).subspan(off, dh));
                        weighted += p(i, j) * dp[j];
                        for (std::size_t e = 0; e < dh; ++e) {
                            dv(j, off + e) += p(i, j) * d_o(i, off + e);
                        }
                    }
                    for (std::size_t j = 0; j <= i; ++j) {
                        const double ds = p(i, j) * (dp[j] - weighted) * inv_sqrt_dh;
                        for (std::size_t e = 0; e < dh; ++e) {
                            dq(i, off + e) += ds * c.k(j, off + e);
                            dk(j, off + e) += ds * c.q(i, off + e);
                        }
                    }
                }
            }
            Mat dh1 = linear_back(dq, *L.q);
            const Mat dh1k = linear_back(dk, *L.k);
            const Mat dh1v = linear_back(dv, *L.v);
            for (std::size_t i = 0; i < dh1.size(); ++i) {
                dh1.values()[i] += dh1k.values()[i] + dh1v.values()[i];
            }
            dx = std::move(dx_mid);
            for (std::size_t i = 0; i < n; ++i) {
                rmsnorm_back_row(c.x_in.row(i), c.r1[i], *L.attn_norm, dh1.row(i), dx.row(i));
            }
        }
    }
    return grad;
}

ForwardTrace forward_capture(const WeightSet & weights, std::span<const int> tokens) {
    return ToyModel(weights).forward(tokens);
}

std::vector<int> greedy_generate(const WeightSet & weights, std::span<const int> prompt, int max_new) {
    return ToyModel(weights).generate(prompt, max_new);
}

// --- planting --------------------------------------------------------------

WeightSet plant_feature(const WeightSet & weights, const PlantSpec & spec) {
    const ToyConfig config = ToyConfig::from_json(weights.config);
    if (spec.layer < 0 || spec.layer >= config.n_layers) {
        fail(ErrorCode::UnknownLayer, fmt::format("plant layer {} outside 0..{}", spec.layer, config.n_layers - 1));
    }
    const auto d = static_cast<std::size_t>(config.d_model);
    if (spec.write_direction.dim() != d) {
        fail(ErrorCode::DimensionMismatch, "plant write direction must have dim d_model");
    }
    if (!spec.readout_tokens.empty() && spec.readout_direction.dim() != d) {
        fail(ErrorCode::DimensionMismatch, "plant readout direction must have dim d_model");
    }
    for (const auto & list : {spec.trigger_tokens, spec.readout_tokens}) {
        for (int t : list) {
            if (t < 0 || t >= config.vocab) {
                fail(ErrorCode::TokenOutOfRange, fmt::format("plant token {} outside vocab", t));
            }
        }
    }
    if (spec.strength == 0.0) {
        return weights;
    }

    WeightSet out = weights;
    json plants = out.config.value("plants", json::array());
    std::size_t used = 0;
    for (const auto & p : plants) {
        used += p.at("layer").get<int>() == spec.layer ? 1 : 0;
    }
    if (used + spec.trigger_tokens.size() > static_cast<std::size_t>(config.ff_dim)) {
        fail(ErrorCode::InvalidConfig, fmt::format("no free MLP units left at layer {}", spec.layer));
    }

    const double sqrt_d = std::sqrt(static_cast<double>(d));
    const double nominal = gelu(kPlantSharpness * (kPlantNominalCos - kPlantThreshold));
    Mat & up = out.at(layer_weight_id(spec.layer, "mlp_up"));
    Mat & bias = out.at(layer_weight_id(spec.layer, "mlp_up_bias"));
    Mat & down = out.at(layer_weight_id(spec.layer, "mlp_down"));
    const Mat & emb = out.at("tok_emb");

    for (int token : spec.trigger_tokens) {
        const std::size_t unit = static_cast<std::size_t>(config.ff_dim) - 1 - used++;
        const Vec e = normalized(emb.row_vec(static_cast<std::size_t>(token)));
        for (std::size_t c = 0; c < d; ++c) {
            up(unit, c) = kPlantSharpness / sqrt_d * e[c];
        }
        bias(0, unit) = -kPlantSharpness * kPlantThreshold;
        for (std::size_t r = 0; r < d; ++r) {
            down(r, unit) = spec.strength * spec.write_direction[r] / nominal;
        }
        plants.push_back({{"layer", spec.layer}, {"unit", unit}, {"token", token}});
    }
    if (!spec.readout_tokens.empty() && spec.readout_gain != 0.0) {
        Mat & unembed = out.at("unembed");
        for (int token : spec.readout_tokens) {
            auto row = unembed.row(static_cast<std::size_t>(token));
            for (std::size_t c = 0; c < d; ++c) {
                row[c] += spec.readout_gain * spec.readout_direction[c];
            }
        }
    }
    out.config["plants"] = std::move(plants);
    return out;
}

WeightSet plant_direction(const WeightSet & weights, int layer, const Vec & d, double strength, int trigger_token,
                          int refuse_token, double readout_gain) {
    if (std::abs(norm(d) - 1.0) > 1e-9) {
        fail(ErrorCode::NotUnitVector, "plant direction must be a unit vector");
    }
    PlantSpec spec;
    spec.layer = layer;
    spec.trigger_tokens = {trigger_token};
    spec.write_direction = d;
    spec.strength = strength;
    spec.readout_direction = d;
    spec.readout_tokens = {refuse_token};
    spec.readout_gain = readout_gain;
    return plant_feature(weights, spec);
}

ActivationDump capture_dump(const ToyModel & model, std::span<const std::string> prompts, std::span<const int> layers,
                            Aggregation aggregation, const std::string & prompt_set_id) {
    const auto d = static_cast<std::size_t>(model.config().d_model);
    ActivationDump dump;
    dump.model_id = fmt::format("toy-seed{}", model.config().seed);
    dump.prompt_set_id = prompt_set_id;
    dump.aggregation = aggregation;
    dump.hidden_dim = d;
    dump.num_prompts = prompts.size();
    for (int layer : layers) {
        if (layer < 0 || layer >= model.config().n_layers) {
            fail(ErrorCode::UnknownLayer, fmt::format("layer {} outside the toy model", layer));
        }
        dump.layers.emplace(layer, Mat(prompts.size(), d));
    }
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        const auto tokens = encode_bytes(prompts[p]);
        const ForwardTrace trace = model.forward(tokens);
        for (int layer : layers) {
            const Mat & res = trace.residuals.at(layer);
            auto row = dump.layers.at(layer).row(p);
            if (aggregation == Aggregation::last_token) {
                const auto last = res.row(res.rows() - 1);
                std::copy(last.begin(), last.end(), row.begin());
            } else {
                for (std::size_t i = 0; i < res.rows(); ++i) {
                    for (std::size_t c = 0; c < d; ++c) {
                        row[c] += res(i, c);
                    }
                }
                for (double & v : row) {
                    v /= static_cast<double>(res.rows());
                }
            }
        }
    }
    return dump;
}

} // namespace sra
