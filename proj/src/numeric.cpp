#include "bamaer/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace bamaer {

void zero_grads(const ParameterList& params) {
    for (auto* p : params) p->zero_grad();
}

DenseLayer::DenseLayer(const std::string& name, Eigen::Index in, Eigen::Index out)
    : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {}

Vec DenseLayer::forward(const Vec& x) const {
    if (x.size() != in_dim()) throw ShapeMismatch("dense input " + std::to_string(x.size()) + " vs " + std::to_string(in_dim()));
    return weight.value * x + bias.value.col(0);
}

Mat DenseLayer::forward_columns(const Mat& x) const {
    if (x.rows() != in_dim()) throw ShapeMismatch("dense input rows " + std::to_string(x.rows()));
    Mat y = weight.value * x;
    y.colwise() += bias.value.col(0);
    return y;
}

Vec DenseLayer::backward(const Vec& x, const Vec& dy) {
    weight.grad.noalias() += dy * x.transpose();
    bias.grad.col(0) += dy;
    return weight.value.transpose() * dy;
}

Mat DenseLayer::backward_columns(const Mat& x, const Mat& dy) {
    weight.grad.noalias() += dy * x.transpose();
    bias.grad.col(0) += dy.rowwise().sum();
    return weight.value.transpose() * dy;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    // log(1 / (1 + e^-x)) without overflow for large |x|
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

Mat gelu(const Mat& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

Mat gelu_backward(const Mat& x, const Mat& dy) {
    return dy.cwiseProduct(x.unaryExpr([](double v) { return gelu_grad(v); }));
}

Mat gelu(const Mat& x, Mat& cdf) {
    cdf = x.unaryExpr([](double v) { return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)); });
    return x.cwiseProduct(cdf);
}

Mat gelu_backward(const Mat& x, const Mat& cdf, const Mat& dy) {
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Mat grad = cdf + x.unaryExpr([norm](double v) { return v * norm * std::exp(-0.5 * v * v); });
    return dy.cwiseProduct(grad);
}

Vec sigmoid(const Vec& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

Vec tanh(const Vec& x) { return x.array().tanh().matrix(); }

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& shift, double eps, LayerNormCache* cache) {
    if (x.size() != gain.size() || x.size() != shift.size()) throw ShapeMismatch("layer_norm");
    const double n = static_cast<double>(x.size());
    const double mean = x.sum() / n;
    Vec centered = x.array() - mean;
    const double var = centered.squaredNorm() / n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    Vec normalized = centered * inv_std;
    Vec y = normalized.cwiseProduct(gain) + shift;
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = inv_std;
    }
    return y;
}

Vec layer_norm_backward(const LayerNormCache& cache, const Vec& gain, const Vec& dy, Eigen::Ref<Vec> dgain,
                        Eigen::Ref<Vec> dshift) {
    const auto& xhat = cache.normalized;
    dgain += dy.cwiseProduct(xhat);
    dshift += dy;
    Vec dxhat = dy.cwiseProduct(gain);
    const double n = static_cast<double>(dy.size());
    const double mean_d = dxhat.sum() / n;
    const double mean_dx = dxhat.dot(xhat) / n;
    return cache.inv_std * (dxhat.array() - mean_d - xhat.array() * mean_dx).matrix();
}

Vec softmax(const Vec& x) {
    if (x.size() == 0) return x;
    const double mx = x.maxCoeff();
    Vec e = (x.array() - mx).exp().matrix();
    return e / e.sum();
}

Vec softmax_backward(const Vec& y, const Vec& dy) {
    const double inner = y.dot(dy);
    return y.cwiseProduct((dy.array() - inner).matrix());
}

std::size_t attended_count(AttentionMask mask, std::size_t row, std::size_t n_keys) {
    switch (mask) {
        case AttentionMask::None: return n_keys;
        case AttentionMask::Causal: return std::min(row + 1, n_keys);
        case AttentionMask::StrictlyPast: return std::min(row, n_keys);
    }
    return n_keys;
}

Vec attend_row(const Vec& query, const Mat& keys, const Mat& values, std::size_t count, Eigen::Ref<Vec> weights) {
    Vec out = Vec::Zero(values.cols());
    if (count == 0) return out;
    const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
        weights[Eigen::Index(j)] = query.dot(keys.row(Eigen::Index(j))) * scale;
        mx = std::max(mx, weights[Eigen::Index(j)]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
        weights[Eigen::Index(j)] = std::exp(weights[Eigen::Index(j)] - mx);
        total += weights[Eigen::Index(j)];
    }
    for (std::size_t j = 0; j < count; ++j) {
        weights[Eigen::Index(j)] /= total;
        out += weights[Eigen::Index(j)] * values.row(Eigen::Index(j)).transpose();
    }
    return out;
}

Vec attend_row_backward(const Vec& query, const Mat& keys, const Mat& values, std::size_t count, const Vec& weights,
                        const Vec& d_out, Mat& d_keys, Mat& d_values) {
    Vec d_query = Vec::Zero(query.size());
    if (count == 0) return d_query;
    const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
    Vec d_weights(static_cast<Eigen::Index>(count));
    for (std::size_t j = 0; j < count; ++j) {
        const auto jj = Eigen::Index(j);
        d_weights[jj] = d_out.dot(values.row(jj));
        d_values.row(jj) += weights[jj] * d_out.transpose();
    }
    const double inner = weights.head(Eigen::Index(count)).dot(d_weights);
    for (std::size_t j = 0; j < count; ++j) {
        const auto jj = Eigen::Index(j);
        const double d_score = weights[jj] * (d_weights[jj] - inner) * scale;
        d_query += d_score * keys.row(jj).transpose();
        d_keys.row(jj) += d_score * query.transpose();
    }
    return d_query;
}

AttentionOutput scaled_dot_attention(const Mat& queries, const Mat& keys, const Mat& values, AttentionMask mask) {
    if (queries.cols() != keys.cols()) throw ShapeMismatch("attention query/key width");
    if (keys.rows() != values.rows()) throw ShapeMismatch("attention key/value count");
    const auto t_rows = queries.rows();
    AttentionOutput out{Mat::Zero(t_rows, values.cols()), Mat::Zero(t_rows, keys.rows())};
    for (Eigen::Index t = 0; t < t_rows; ++t) {
        const auto count = attended_count(mask, std::size_t(t), std::size_t(keys.rows()));
        Vec w = Vec::Zero(keys.rows());
        Vec q = queries.row(t).transpose();
        out.output.row(t) = attend_row(q, keys, values, count, w).transpose();
        out.weights.row(t) = w.transpose();
    }
    return out;
}

AttentionGrads scaled_dot_attention_backward(const Mat& queries, const Mat& keys, const Mat& values,
                                             const Mat& weights, const Mat& d_output) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    AttentionGrads g;
    g.values = weights.transpose() * d_output;
    Mat d_weights = d_output * values.transpose();
    // Masked entries have weight exactly zero, so they receive no score gradient.
    Vec inner = weights.cwiseProduct(d_weights).rowwise().sum();
    Mat d_scores = weights.cwiseProduct(d_weights - inner.replicate(1, weights.cols()));
    g.queries = d_scores * keys * scale;
    g.keys = d_scores.transpose() * queries * scale;
    return g;
}

}  // namespace bamaer
