// Shared scalar/vector aliases, RNG type, and error hierarchy.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ampls {

using Rng = std::mt19937_64;

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct SamplingExhausted : Error { using Error::Error; };
struct IkFailed : Error { using Error::Error; };
struct TrainingDiverged : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct SchemaMismatch : Error { using Error::Error; };
struct CorruptBlob : Error { using Error::Error; };
struct InvalidCount : Error { using Error::Error; };
struct DegenerateTarget : Error { using Error::Error; };
struct PlanningFailed : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// FNV-1a over raw bytes; stable across platforms, used for config/model hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace ampls
