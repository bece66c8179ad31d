#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "skullkit/error.hpp"

namespace skullkit {

// Fréchet distance between Gaussian fits of two feature populations.
// Feature extraction happens elsewhere; rows arrive through NPY files.

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct FeatureMatrix {
  Eigen::MatrixXd features;  // N x K
  std::string source;

  void validate() const;
};

FeatureMatrix load_features(const std::filesystem::path& path);
void save_features(const FeatureMatrix& f, const std::filesystem::path& path);

template <typename Scalar = double>
struct FeatureStats {
  VectorX<Scalar> mu;
  MatrixX<Scalar> sigma;
  Eigen::Index n = 0;
};

// Column means and unbiased (N - 1) covariance.
template <typename Derived>
FeatureStats<typename Derived::Scalar> feature_stats(const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  if (f.rows() < 2) throw InvalidArgument("feature_stats: need at least 2 rows");
  FeatureStats<Scalar> st;
  st.n = f.rows();
  st.mu = f.colwise().mean().transpose();
  const MatrixX<Scalar> centered = f.rowwise() - st.mu.transpose();
  st.sigma = (centered.transpose() * centered) / static_cast<Scalar>(f.rows() - 1);
  st.sigma = Scalar(0.5) * (st.sigma + st.sigma.transpose()).eval();
  return st;
}

inline FeatureStats<double> feature_stats(const FeatureMatrix& f) {
  f.validate();
  return feature_stats(f.features);
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, typename Derived::Scalar tol = 1e-9) {
  using std::max;
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const auto scale = max(typename Derived::Scalar(1), a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

// Symmetric square root of a symmetric PSD matrix via eigendecomposition;
// eigenvalues below zero (round-off) are clamped to zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> matrix_sqrt_psd(const Eigen::MatrixBase<Derived>& a,
                                                  typename Derived::Scalar sym_tol = 1e-9) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(a, sym_tol)) throw InvalidArgument("matrix_sqrt_psd: input is not symmetric");
  const MatrixX<Scalar> sym = Scalar(0.5) * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("matrix_sqrt_psd: eigendecomposition failed");
  const VectorX<Scalar> root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// Any factor with F F^T = sigma: Cholesky when it succeeds, else the
// symmetric PSD root (singular covariances, N <= K).
template <typename Scalar>
MatrixX<Scalar> covariance_factor(const MatrixX<Scalar>& sigma) {
  Eigen::LLT<MatrixX<Scalar>> llt(sigma);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  return matrix_sqrt_psd(sigma);
}

// Tr (sigma_r sigma_s)^{1/2}. With sigma = F F^T the eigenvalues of
// sigma_r sigma_s are the squared singular values of F_r^T F_s, so the trace is
// their plain sum; this avoids square roots of round-off sized eigenvalues
// when a covariance is nearly singular.
template <typename Scalar>
Scalar trace_sqrt_product(const MatrixX<Scalar>& sigma_r, const MatrixX<Scalar>& sigma_s) {
  if (!is_symmetric(sigma_r, Scalar(1e-9)) || !is_symmetric(sigma_s, Scalar(1e-9)))
    throw InvalidArgument("trace_sqrt_product: covariance is not symmetric");
  const MatrixX<Scalar> m = covariance_factor(sigma_r).transpose() * covariance_factor(sigma_s);
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m);
  return svd.singularValues().sum();
}

// standard:      |mu_r - mu_s|^2 + Tr(S_r + S_s - 2 (S_r S_s)^{1/2})
// elementwise:   the root is taken element-wise of the element-wise product
//                S_r ⊙ S_s, so only its diagonal sqrt(S_r,ii S_s,ii) enters.
enum class FidMode { standard, elementwise };

std::string_view to_string(FidMode m);
FidMode fid_mode_from_string(std::string_view s);

template <typename Scalar = double>
struct FidResult {
  Scalar fid = 0;
  Scalar mean_term = 0;
  Scalar trace_term = 0;
  FidMode mode = FidMode::standard;
};

template <typename Scalar>
FidResult<Scalar> fid(const FeatureStats<Scalar>& r, const FeatureStats<Scalar>& s,
                      FidMode mode = FidMode::standard) {
  const auto k = r.mu.size();
  if (s.mu.size() != k || r.sigma.rows() != k || r.sigma.cols() != k || s.sigma.rows() != k ||
      s.sigma.cols() != k)
    throw DimensionError("fid: feature dimensions differ");
  FidResult<Scalar> out;
  out.mode = mode;
  out.mean_term = (r.mu - s.mu).squaredNorm();
  Scalar cross = 0;
  if (mode == FidMode::standard) {
    cross = trace_sqrt_product(r.sigma, s.sigma);
  } else {
    cross = (r.sigma.diagonal().cwiseProduct(s.sigma.diagonal())).cwiseMax(Scalar(0)).cwiseSqrt().sum();
  }
  out.trace_term = r.sigma.trace() + s.sigma.trace() - Scalar(2) * cross;
  out.fid = out.mean_term + out.trace_term;
  using std::isfinite;
  if (!isfinite(out.fid)) throw NumericalError("fid: non-finite result");
  return out;
}

}  // namespace skullkit
