#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hublid {

enum class FeatureFormat { csv, fbin };

// Dense n x d feature matrix, one row per fragment, row-major.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  // Validates the invariants (n >= 1, d >= 1, unique ids, finite values).
  FeatureMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<double> values);

  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  const std::vector<double>& values() const noexcept { return values_; }

  // Rows selected by index, in the given order.
  FeatureMatrix subset(std::span<const std::size_t> indices) const;

  // 64-bit FNV-1a over shape, ids and value bits; used as a cache key.
  std::uint64_t fingerprint() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

FeatureFormat format_from_path(const std::filesystem::path& path);

FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format);
inline FeatureMatrix load_features(const std::filesystem::path& path) {
  return load_features(path, format_from_path(path));
}

// fbin stores 32-bit floats: values are narrowed on write.
void save_fbin(const FeatureMatrix& m, const std::filesystem::path& path);
void save_csv(const FeatureMatrix& m, const std::filesystem::path& path);

struct NormalizedFeatures {
  FeatureMatrix matrix;
  std::vector<std::size_t> zero_rows;  // left as all-zero
};

NormalizedFeatures l2_normalize(const FeatureMatrix& m);

// Early fusion: each modality L2-normalized per row, then concatenated.
// All inputs must list the same ids in the same order.
NormalizedFeatures fuse(std::span<const FeatureMatrix> modalities);

}  // namespace hublid
