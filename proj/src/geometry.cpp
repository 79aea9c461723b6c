#include "relieve/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <string>

#include "relieve/error.hpp"

namespace relieve {
namespace {

constexpr double kSmallAngle = 1e-8;
// Cancellation in (theta - sin theta) and friends gets bad well before the
// series cutoff above, so the cubic coefficients use a longer series here.
constexpr double kSeriesAngle = 1e-2;

// Coefficients of the left Jacobian V = I + b*W + c*W^2.
void v_coefficients(double theta, double& b, double& c) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) {
    b = 0.5 - t2 / 24.0;
    c = 1.0 / 6.0 - t2 / 120.0;
    return;
  }
  const double half = std::sin(0.5 * theta);
  b = 2.0 * half * half / t2;
  if (theta < kSeriesAngle)
    c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  else
    c = (theta - std::sin(theta)) / (t2 * theta);
}

}  // namespace

bool CameraIntrinsics::valid() const {
  return std::isfinite(fx) && std::isfinite(fy) && fx > 0 && fy > 0 && width > 0 && height > 0 &&
         cx >= 0 && cx < width && cy >= 0 && cy < height;
}

void CameraIntrinsics::validate() const {
  if (!(std::isfinite(fx) && fx > 0)) throw domain_error("intrinsics: fx must be positive");
  if (!(std::isfinite(fy) && fy > 0)) throw domain_error("intrinsics: fy must be positive");
  if (width <= 0 || height <= 0) throw domain_error("intrinsics: image size must be positive");
  if (!(cx >= 0 && cx < width)) throw domain_error("intrinsics: cx outside [0, width)");
  if (!(cy >= 0 && cy < height)) throw domain_error("intrinsics: cy outside [0, height)");
}

bool PoseSE3::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Vec3 pixel_ray(const Pixel& u, const CameraIntrinsics& k) {
  return {(u.x - k.cx) / k.fx, (u.y - k.cy) / k.fy, 1.0};
}

Vec3 backproject(const Pixel& u, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0) || !std::isfinite(depth))
    throw domain_error("backproject: depth must be positive and finite, got " + std::to_string(depth));
  if (!std::isfinite(u.x) || !std::isfinite(u.y)) throw domain_error("backproject: non-finite pixel");
  return depth * pixel_ray(u, k);
}

Pixel project(const Vec3& p_cam, const CameraIntrinsics& k) {
  if (!(p_cam.z() > 0)) throw domain_error("project: point is behind the camera");
  return {k.fx * p_cam.x() / p_cam.z() + k.cx, k.fy * p_cam.y() / p_cam.z() + k.cy};
}

Vec3 to_world(const Vec3& p_cam, const PoseSE3& pose) { return pose.rotation * p_cam + pose.translation; }

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(),  //
      w.z(), 0, -w.x(),   //
      -w.y(), w.x(), 0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = hat(omega);
  double a;
  double b;
  double c;
  v_coefficients(theta, b, c);
  if (theta < kSmallAngle)
    a = 1.0 - theta * theta / 6.0;
  else
    a = std::sin(theta) / theta;
  return Mat3::Identity() + a * w + b * w * w;
}

Vec3 so3_log(const Mat3& rotation) {
  // Quaternion route: the atan2 angle keeps full precision near 0 and pi,
  // unlike arccos of the trace.
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const Vec3 xyz = q.vec();
  const double sin_half = xyz.norm();
  if (sin_half < kSmallAngle) return 2.0 * xyz / q.w();
  const double theta = 2.0 * std::atan2(sin_half, q.w());
  return theta / sin_half * xyz;
}

PoseSE3 se3_exp(const TangentSE3& xi) {
  const double theta = xi.omega.norm();
  double b;
  double c;
  v_coefficients(theta, b, c);
  const Mat3 w = hat(xi.omega);
  const Mat3 v = Mat3::Identity() + b * w + c * w * w;
  return {so3_exp(xi.omega), v * xi.v};
}

TangentSE3 se3_log(const PoseSE3& pose) {
  TangentSE3 xi;
  xi.omega = so3_log(pose.rotation);
  const double theta = xi.omega.norm();
  const double t2 = theta * theta;
  // V^-1 = I - W/2 + d*W^2
  double d;
  if (theta < kSeriesAngle)
    d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  else
    d = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / t2;
  const Mat3 w = hat(xi.omega);
  xi.v = (Mat3::Identity() - 0.5 * w + d * w * w) * pose.translation;
  return xi;
}

double rotation_angle(const Mat3& rotation) { return so3_log(rotation).norm(); }

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
  return u * v.transpose();
}

}  // namespace relieve
