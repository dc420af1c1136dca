#include "hublid/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>
#include <unordered_set>

#include "hublid/error.hpp"
#include "hublid/table_io.hpp"

namespace hublid {

namespace {

constexpr char kMagic[4] = {'H', 'L', 'F', '1'};

std::uint32_t load_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<double> values)
    : ids_(std::move(ids)), dim_(dim), values_(std::move(values)) {
  if (ids_.empty()) throw Error("feature matrix has no rows");
  if (dim_ == 0) throw Error("feature matrix has zero dimensions");
  if (values_.size() != ids_.size() * dim_)
    throw Error("feature matrix holds " + std::to_string(values_.size()) + " values, expected " +
                std::to_string(ids_.size() * dim_));
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!seen.insert(ids_[i]).second) throw Error("duplicate fragment id '" + ids_[i] + "' at row " + std::to_string(i + 1));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      throw Error("non-finite value at row " + std::to_string(i / dim_ + 1) + " of fragment '" + ids_[i / dim_] + "'");
  }
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> indices) const {
  std::vector<std::string> ids;
  std::vector<double> values;
  ids.reserve(indices.size());
  values.reserve(indices.size() * dim_);
  for (auto i : indices) {
    ids.push_back(ids_.at(i));
    const auto r = row(i);
    values.insert(values.end(), r.begin(), r.end());
  }
  return FeatureMatrix(std::move(ids), dim_, std::move(values));
}

std::uint64_t FeatureMatrix::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t shape[2] = {rows(), dim_};
  mix(shape, sizeof(shape));
  for (const auto& id : ids_) {
    mix(id.data(), id.size());
    mix("\0", 1);
  }
  mix(values_.data(), values_.size() * sizeof(double));
  return h;
}

FeatureFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".fbin") return FeatureFormat::fbin;
  if (ext == ".csv" || ext == ".txt") return FeatureFormat::csv;
  throw Error("cannot infer feature format from '" + path.string() + "' (expected .csv or .fbin)");
}

namespace {

FeatureMatrix load_csv(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::vector<std::string> ids;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t dim = 0;

  table::for_each_row(path, [&](std::size_t row, const std::vector<std::string_view>& fields) {
    if (fields.size() < 2) throw ParseError(source, row, "expected id followed by at least one value");
    if (ids.empty()) dim = fields.size() - 1;
    if (fields.size() - 1 != dim)
      throw ParseError(source, row,
                       "expected " + std::to_string(dim) + " values, found " + std::to_string(fields.size() - 1));
    std::string id(fields[0]);
    if (id.empty()) throw ParseError(source, row, "empty fragment id");
    if (auto [it, fresh] = seen.emplace(id, row); !fresh)
      throw ParseError(source, row, "duplicate fragment id '" + id + "' (first seen at row " + std::to_string(it->second) + ")");
    for (std::size_t c = 1; c < fields.size(); ++c) values.push_back(table::parse_real(fields[c], source, row));
    ids.push_back(std::move(id));
  });

  if (ids.empty()) throw ParseError(source, 0, "empty feature file");
  return FeatureMatrix(std::move(ids), dim, std::move(values));
}

FeatureMatrix load_fbin(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + source);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + source);
  if (bytes.empty()) throw ParseError(source, 0, "empty feature file");
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError(source, 0, "missing HLF1 header");

  const std::uint32_t n = load_u32(bytes.data() + 4);
  const std::uint32_t d = load_u32(bytes.data() + 8);
  if (n == 0 || d == 0) throw ParseError(source, 0, "header declares an empty matrix");
  std::size_t pos = 12;
  const std::size_t payload = std::size_t(n) * d * 4;
  if (bytes.size() - pos < payload) throw ParseError(source, (bytes.size() - pos) / (std::size_t(d) * 4) + 1, "truncated values");

  std::vector<double> values(std::size_t(n) * d);
  for (std::size_t i = 0; i < values.size(); ++i, pos += 4) {
    const float f = std::bit_cast<float>(load_u32(bytes.data() + pos));
    if (!std::isfinite(f)) throw ParseError(source, i / d + 1, "non-finite value");
    values[i] = f;
  }

  std::vector<std::string> ids;
  ids.reserve(n);
  std::unordered_set<std::string> seen;
  for (std::uint32_t r = 0; r < n; ++r) {
    if (bytes.size() - pos < 2) throw ParseError(source, r + 1, "truncated id table");
    const std::size_t len = std::size_t(bytes[pos]) | (std::size_t(bytes[pos + 1]) << 8);
    pos += 2;
    if (bytes.size() - pos < len) throw ParseError(source, r + 1, "truncated id");
    std::string id(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    if (id.empty()) throw ParseError(source, r + 1, "empty fragment id");
    if (!seen.insert(id).second) throw ParseError(source, r + 1, "duplicate fragment id '" + id + "'");
    ids.push_back(std::move(id));
  }
  if (pos != bytes.size()) throw ParseError(source, n, "trailing bytes after id table");
  return FeatureMatrix(std::move(ids), d, std::move(values));
}

}  // namespace

FeatureMatrix load_features(const std::filesystem::path& path, FeatureFormat format) {
  return format == FeatureFormat::csv ? load_csv(path) : load_fbin(path);
}

void save_fbin(const FeatureMatrix& m, const std::filesystem::path& path) {
  if (m.rows() > UINT32_MAX || m.dim() > UINT32_MAX) throw Error("matrix too large for fbin");
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.dim()));
  out.reserve(out.size() + m.values().size() * 4);
  for (double v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (const auto& id : m.ids()) {
    if (id.size() > UINT16_MAX) throw Error("fragment id longer than 65535 bytes: '" + id.substr(0, 32) + "...'");
    put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
  }
  table::write_file(path, out);
}

void save_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += m.id(i);
    for (double v : m.row(i)) {
      out += ',';
      out += table::format_real(v);
    }
    out += '\n';
  }
  table::write_file(path, out);
}

NormalizedFeatures l2_normalize(const FeatureMatrix& m) {
  std::vector<double> values = m.values();
  std::vector<std::size_t> zero_rows;
  const std::size_t d = m.dim();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += values[i * d + c] * values[i * d + c];
    if (sq == 0.0) {
      zero_rows.push_back(i);
      continue;
    }
    const double norm = std::sqrt(sq);
    for (std::size_t c = 0; c < d; ++c) values[i * d + c] /= norm;
  }
  return {FeatureMatrix(m.ids(), d, std::move(values)), std::move(zero_rows)};
}

NormalizedFeatures fuse(std::span<const FeatureMatrix> modalities) {
  if (modalities.empty()) throw Error("fuse needs at least one feature matrix");
  const auto& ids = modalities.front().ids();
  std::size_t total_dim = 0;
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    const auto& other = modalities[m].ids();
    if (other.size() != ids.size())
      throw Error("input " + std::to_string(m + 1) + " has " + std::to_string(other.size()) + " fragments, expected " +
                  std::to_string(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (other[i] != ids[i])
        throw Error("id mismatch at row " + std::to_string(i + 1) + ": '" + other[i] + "' in input " +
                    std::to_string(m + 1) + " vs '" + ids[i] + "' in input 1");
    }
    total_dim += modalities[m].dim();
  }

  std::vector<double> values(ids.size() * total_dim);
  std::vector<bool> zero(ids.size(), false);
  std::size_t offset = 0;
  for (const auto& modality : modalities) {
    const auto normalized = l2_normalize(modality);
    for (auto z : normalized.zero_rows) zero[z] = true;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto r = normalized.matrix.row(i);
      std::copy(r.begin(), r.end(), values.begin() + static_cast<std::ptrdiff_t>(i * total_dim + offset));
    }
    offset += modality.dim();
  }

  std::vector<std::size_t> zero_rows;
  for (std::size_t i = 0; i < zero.size(); ++i)
    if (zero[i]) zero_rows.push_back(i);
  return {FeatureMatrix(ids, total_dim, std::move(values)), std::move(zero_rows)};
}

}  // namespace hublid
