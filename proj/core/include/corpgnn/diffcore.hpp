#pragma once

// Dense double-precision kernel with hand-written reverse-mode rules.
//
// Every forward op is a free function returning a fresh Array2; its
// backward counterpart takes the upstream gradient `dout` (same shape as
// the forward output) plus whatever forward values it needs, and returns
// gradients for the inputs. The model composes these explicitly; there is
// no tape.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace corpgnn {

class Array2 {
 public:
  Array2() = default;
  Array2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Array2(std::size_t rows, std::size_t cols, std::vector<double> data);
  Array2(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Array2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  void fill(double v);

  Array2& operator+=(const Array2& other);
  Array2& operator*=(double s);

  bool operator==(const Array2& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws Error(kNonFinite) naming `where` if any entry is NaN or Inf.
void require_finite(const Array2& a, const char* where);

Array2 transpose(const Array2& a);

// ---- forward / backward pairs ------------------------------------------

Array2 matmul(const Array2& a, const Array2& b);
struct MatmulGrad {
  Array2 da;
  Array2 db;
};
MatmulGrad matmul_backward(const Array2& a, const Array2& b, const Array2& dout);

Array2 add_bias(const Array2& x, const Array2& bias);
/// dx equals dout; only the bias gradient (column sums) is computed here.
Array2 add_bias_backward(const Array2& dout);

Array2 relu(const Array2& x);
Array2 relu_backward(const Array2& x, const Array2& dout);

Array2 tanh_op(const Array2& x);
Array2 tanh_backward(const Array2& out, const Array2& dout);

/// Per-segment arithmetic mean of rows. Empty segments give zero rows.
Array2 segment_mean(const Array2& x, std::span<const int> segments, std::size_t n_segments);
Array2 segment_mean_backward(const Array2& dout, std::span<const int> segments, std::size_t n_rows);

Array2 gather_rows(const Array2& x, std::span<const int> idx);
/// Scatter-add of dout rows into an n_rows × d zero matrix.
Array2 gather_rows_backward(const Array2& dout, std::span<const int> idx, std::size_t n_rows);

/// Multiplies row i of x (N×d) by the scalar g(i,0) (g is N×1).
Array2 scale_rows(const Array2& x, const Array2& g);
struct ScaleRowsGrad {
  Array2 dx;
  Array2 dg;
};
ScaleRowsGrad scale_rows_backward(const Array2& x, const Array2& g, const Array2& dout);

/// y = x·p / ‖p‖₂ for x N×d and p d×1. Throws kZeroProjection when ‖p‖ < 1e-12.
Array2 normalized_projection(const Array2& x, const Array2& p);
struct ProjectionGrad {
  Array2 dx;
  Array2 dp;
};
ProjectionGrad normalized_projection_backward(const Array2& x, const Array2& p, const Array2& dout);

/// Row-wise x / max(‖x_row‖₂, 1e-12).
Array2 l2_normalize_rows(const Array2& x);
Array2 l2_normalize_rows_backward(const Array2& x, const Array2& out, const Array2& dout);

struct SoftmaxXent {
  double loss = 0.0;
  Array2 probs;
};
/// Mean cross-entropy over rows. With non-empty `sample_weights` (one per
/// row) the mean is weighted: Σ wᵢ·lᵢ / Σ wᵢ.
SoftmaxXent softmax_xent(const Array2& logits, std::span<const int> labels,
                         std::span<const double> sample_weights = {});
Array2 softmax_xent_backward(const Array2& probs, std::span<const int> labels,
                             std::span<const double> sample_weights = {});

/// Row-wise softmax, stabilized by row-max subtraction.
Array2 softmax_rows(const Array2& logits);

// ---- parameters -----------------------------------------------------------

struct Parameter {
  std::string name;
  Array2 value;
  Array2 grad;
};

/// Named parameters with paired gradients; iteration is insertion order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Array2 value);

  bool contains(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  Array2& value(const std::string& name) { return at(name).value; }
  const Array2& value(const std::string& name) const { return at(name).value; }
  Array2& grad(const std::string& name) { return at(name).grad; }

  std::vector<Parameter>& entries() noexcept { return entries_; }
  const std::vector<Parameter>& entries() const noexcept { return entries_; }

  std::size_t num_values() const noexcept;
  void zero_grad();

  nlohmann::ordered_json to_json() const;
  static ParameterStore from_json(const nlohmann::ordered_json& j);

 private:
  std::vector<Parameter> entries_;
};

// ---- gradient checking -----------------------------------------------------

/// Loss callback for grad_check: evaluates the scalar and, when
/// `want_grad` is set, writes analytic gradients into the store.
using LossFn = std::function<double(ParameterStore&, bool want_grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  bool finite = true;
};

/// Central differences per coordinate against the analytic gradient.
/// Relative error is |a − n| / max(1, |a|, |n|).
GradCheckResult grad_check(ParameterStore& params, const LossFn& f, double eps = 1e-5);

}  // namespace corpgnn
