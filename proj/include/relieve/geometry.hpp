#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace relieve {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Continuous pixel coordinate. Origin at the center of the top-left pixel,
/// x is the column and y the row.
struct Pixel {
  double x = 0.0;
  double y = 0.0;
};

/// Pinhole calibration, no distortion.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const;
  /// Throws a domain error naming the violated field.
  void validate() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Camera-to-world rigid transform. The translation is the camera center.
struct PoseSE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static PoseSE3 identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  PoseSE3 operator*(const PoseSE3& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  PoseSE3 inverse() const {
    const Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// Orthonormality and det = +1 within `tol`.
  bool is_valid(double tol = 1e-9) const;
};

/// se(3) coordinates: rotation vector `omega` (axis times angle, radians)
/// followed by the translational part `v`.
struct TangentSE3 {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

/// d * K^-1 [u; 1]. Throws on non-positive or non-finite depth.
Vec3 backproject(const Pixel& u, double depth, const CameraIntrinsics& k);

/// Inverse of backproject. Throws when the point is on or behind the image plane.
Pixel project(const Vec3& p_cam, const CameraIntrinsics& k);

/// Unit-depth ray K^-1 [u; 1].
Vec3 pixel_ray(const Pixel& u, const CameraIntrinsics& k);

Vec3 to_world(const Vec3& p_cam, const PoseSE3& pose);

inline Vec3 camera_center(const PoseSE3& pose) { return pose.translation; }

Mat3 hat(const Vec3& w);

// SO(3) exponential / logarithm. Below ||omega|| = 1e-8 both switch to the
// second-order series.
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& rotation);

PoseSE3 se3_exp(const TangentSE3& xi);
TangentSE3 se3_log(const PoseSE3& pose);

/// Geodesic angle of a rotation matrix, radians in [0, pi].
double rotation_angle(const Mat3& rotation);

/// Nearest rotation in the Frobenius sense (SVD projection).
Mat3 orthonormalize(const Mat3& m);

}  // namespace relieve
