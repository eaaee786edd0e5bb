#pragma once

#include <string>
#include <vector>

#include "bamaer/tensor.hpp"

namespace bamaer {

/// A named trainable array with a gradient buffer of the same shape.
/// Vectors are stored as single-column matrices.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
    Eigen::Index size() const { return value.size(); }
    double& scalar() { return value(0, 0); }
    double scalar() const { return value(0, 0); }
    double& scalar_grad() { return grad(0, 0); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);

/// y = W x + b, applied to a vector or to every column of a matrix.
struct DenseLayer {
    Parameter weight;
    Parameter bias;

    DenseLayer() = default;
    DenseLayer(const std::string& name, Eigen::Index in, Eigen::Index out);

    Eigen::Index in_dim() const { return weight.value.cols(); }
    Eigen::Index out_dim() const { return weight.value.rows(); }

    Vec forward(const Vec& x) const;
    Mat forward_columns(const Mat& x) const;

    /// Accumulates parameter gradients and returns the input gradient.
    Vec backward(const Vec& x, const Vec& dy);
    Mat backward_columns(const Mat& x, const Mat& dy);

    void append_parameters(ParameterList& out) { out.push_back(&weight); out.push_back(&bias); }
};

// Elementwise activations. gelu is the exact x * Phi(x) form.
double gelu(double x);
double gelu_grad(double x);
double sigmoid(double x);
double log_sigmoid(double x);

Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);
/// gelu(x) that also stores Phi(x), so the backward pass skips the erf.
Mat gelu(const Mat& x, Mat& cdf);
Mat gelu_backward(const Mat& x, const Mat& cdf, const Mat& dy);
Vec sigmoid(const Vec& x);
Vec tanh(const Vec& x);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    Vec normalized;  // (x - mean) / sqrt(var + eps)
    double inv_std = 0.0;
};

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& shift, double eps = kLayerNormEps,
               LayerNormCache* cache = nullptr);
/// Accumulates into dgain/dshift and returns dx.
Vec layer_norm_backward(const LayerNormCache& cache, const Vec& gain, const Vec& dy, Eigen::Ref<Vec> dgain,
                        Eigen::Ref<Vec> dshift);

Vec softmax(const Vec& x);
/// Vector-Jacobian product of softmax given its output y.
Vec softmax_backward(const Vec& y, const Vec& dy);

enum class AttentionMask {
    None,
    Causal,        // row t sees keys 0..t
    StrictlyPast,  // row t sees keys 0..t-1; row 0 attends nothing and outputs zero
};

std::size_t attended_count(AttentionMask mask, std::size_t row, std::size_t n_keys);

/// One query against the first `count` rows of keys/values (both row-per-item).
/// Writes the attention weights into weights[0..count) and returns the output row.
/// count == 0 yields a zero output.
Vec attend_row(const Vec& query, const Mat& keys, const Mat& values, std::size_t count, Eigen::Ref<Vec> weights);

/// Backward of attend_row for one query. Accumulates into d_keys/d_values rows
/// [0, count) and returns the query gradient.
Vec attend_row_backward(const Vec& query, const Mat& keys, const Mat& values, std::size_t count, const Vec& weights,
                        const Vec& d_out, Mat& d_keys, Mat& d_values);

struct AttentionOutput {
    Mat output;   // T x dv
    Mat weights;  // T x S, zero outside the mask
};

/// softmax(q k^T / sqrt(d)) v with row-per-item inputs.
AttentionOutput scaled_dot_attention(const Mat& queries, const Mat& keys, const Mat& values, AttentionMask mask);

struct AttentionGrads {
    Mat queries, keys, values;
};

AttentionGrads scaled_dot_attention_backward(const Mat& queries, const Mat& keys, const Mat& values,
                                             const Mat& weights, const Mat& d_output);

}  // namespace bamaer
