#include "pmm/experiments/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pmm/numerics/error.hpp"

namespace pmm::experiments {
namespace {

constexpr int kBalanceRetries = 20;

// Centres the image and scales it to norm √d; returns false for constant images.
bool to_sphere(std::span<const std::uint8_t> px, std::span<double> out) {
  const double d = static_cast<double>(px.size());
  double mean = 0;
  for (auto v : px) mean += v;
  mean /= d;
  double ss = 0;
  for (std::size_t i = 0; i < px.size(); ++i) {
    out[i] = px[i] - mean;
    ss += out[i] * out[i];
  }
  if (ss == 0.0) return false;
  const double s = std::sqrt(d / ss);
  for (double& v : out) v *= s;
  return true;
}

void shuffle(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

mlp::TrainSample take(const Matrix& x, const Vector& y, std::span<const std::size_t> idx) {
  mlp::TrainSample s{Matrix(idx.size(), x.cols()), Matrix(idx.size(), 1)};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(x.row(idx[r]).begin(), x.row(idx[r]).end(), s.x.row(r).begin());
    s.y(r, 0) = y[idx[r]];
  }
  return s;
}

bool has_both_classes(const Matrix& y) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < y.rows(); ++i) (y(i, 0) > 0 ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

Split preprocess(const IdxDataset& ds, int digit_a, int digit_b, std::size_t m_train,
                 std::size_t m_test, RngStream& rng) {
  if (digit_a == digit_b) throw Error(ErrorKind::invalid_input, "digit pair must differ");
  if (m_train == 0) throw Error(ErrorKind::invalid_input, "training split must be nonempty");
  if (ds.labels.size() != ds.count)
    throw Error(ErrorKind::consistency, "image and label counts differ");
  const std::size_t d0 = ds.rows * ds.cols;

  Split out;
  std::vector<std::size_t> rows;
  Matrix x(ds.count, d0);
  Vector y(ds.count);
  for (std::size_t i = 0; i < ds.count; ++i) {
    const int lab = ds.labels[i];
    if (lab != digit_a && lab != digit_b) continue;
    if (!to_sphere(ds.image(i), x.row(i))) {
      ++out.excluded;
      out.warnings.push_back("image " + std::to_string(i) + " is constant; excluded");
      continue;
    }
    y[i] = lab == digit_a ? 1.0 : -1.0;
    rows.push_back(i);
  }
  if (rows.size() < m_train + m_test)
    throw Error(ErrorKind::insufficient_data,
                "digits " + std::to_string(digit_a) + "/" + std::to_string(digit_b) + " give " +
                    std::to_string(rows.size()) + " usable images, need " +
                    std::to_string(m_train + m_test));
  shuffle(rows, rng);
  const std::span<const std::size_t> all(rows);
  out.train = take(x, y, all.first(m_train));
  out.test = take(x, y, all.subspan(m_train, m_test));
  if (!has_both_classes(out.train.y))
    throw Error(ErrorKind::insufficient_data, "training split contains a single class");
  return out;
}

SynthData synth_teacher_data(const SynthSpec& spec, RngStream& rng) {
  if (spec.teacher_depth < 1) throw Error(ErrorKind::invalid_input, "teacher depth must be >= 1");
  if (spec.d0 == 0 || spec.m_train == 0)
    throw Error(ErrorKind::invalid_input, "input dimension and training size must be positive");
  std::vector<std::size_t> widths{spec.d0};
  for (std::size_t l = 1; l < spec.teacher_depth; ++l) widths.push_back(spec.teacher_width);
  widths.push_back(1);
  const std::size_t total = spec.m_train + spec.m_test;

  for (int attempt = 0; attempt <= kBalanceRetries; ++attempt) {
    mlp::MlpNet teacher = mlp::init_rms_one(widths, rng);
    Matrix x(total, spec.d0);
    for (std::size_t i = 0; i < total; ++i) {
      auto r = x.row(i);
      rng.fill_normal(r);
      const double s = std::sqrt(static_cast<double>(spec.d0)) / norm2(r);
      for (double& v : r) v *= s;
    }
    const Matrix f = mlp::mlp_forward_batch(teacher, x);
    Vector y(total);
    double positive = 0;
    for (std::size_t i = 0; i < total; ++i) {
      y[i] = f(i, 0) >= 0.0 ? 1.0 : -1.0;
      positive += y[i] > 0;
    }
    const double frac = positive / static_cast<double>(total);
    if (frac < 0.4 || frac > 0.6) continue;
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    const std::span<const std::size_t> all(idx);
    return {Split{take(x, y, all.first(spec.m_train)), take(x, y, all.subspan(spec.m_train)), 0, {}},
            std::move(teacher)};
  }
  throw Error(ErrorKind::balance_failure,
              "teacher labels stayed outside 60/40 balance after " +
                  std::to_string(kBalanceRetries) + " redraws");
}

}  // namespace pmm::experiments
