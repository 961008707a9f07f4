#include "ncdetect/dataset.hpp"

#include "ncdetect/csv.hpp"
#include "ncdetect/errors.hpp"
#include "ncdetect/random.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ncdetect {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw FormatError(std::string("nceb: truncated header (") + what + ")");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

float parse_float(const std::string& field, std::size_t line) {
  float value = 0.0f;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw FormatError("csv: bad number '" + field + "' on line " + std::to_string(line));
  return value;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_default_ids(const std::vector<std::string>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != std::to_string(i)) return false;
  return true;
}

EmbeddingDataset load_csv_embeddings(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw FormatError("csv: empty file " + path.string());
  const auto& header = rows.front();
  if (header.size() < 2 || header[0] != "id")
    throw FormatError("csv: expected header 'id,f0,f1,...' in " + path.string());
  const std::size_t d = header.size() - 1;
  const std::size_t m = rows.size() - 1;
  if (m == 0) throw FormatError("csv: no data rows in " + path.string());

  EmbeddingDataset data;
  data.embeddings.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  data.ids.reserve(m);
  for (std::size_t r = 0; r < m; ++r) {
    const auto& row = rows[r + 1];
    if (row.size() != d + 1)
      throw FormatError("csv: line " + std::to_string(r + 2) + " has " +
                        std::to_string(row.size()) + " fields, expected " +
                        std::to_string(d + 1));
    data.ids.push_back(row[0]);
    for (std::size_t c = 0; c < d; ++c)
      data.embeddings(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_float(row[c + 1], r + 2);
  }
  return data;
}

EmbeddingDataset read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), head.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got == 0) throw FormatError("empty file " + path.string());

  if (got == 4 && std::string_view(head.data(), 4) == "NCEB") {
    in.clear();
    in.seekg(0);
    EmbeddingDataset data;
    data.embeddings = read_nceb(in);
    data.ids = default_ids(data.rows());
    return data;
  }
  if (got >= 3 && std::string_view(head.data(), 3) == "id,") {
    in.close();
    return load_csv_embeddings(path);
  }
  throw FormatError(path.string() + ": neither NCEB nor 'id,...' CSV");
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::positive ? "pos" : "neg"; }

Label parse_label(std::string_view text) {
  if (text == "pos" || text == "positive" || text == "1") return Label::positive;
  if (text == "neg" || text == "negative" || text == "0") return Label::negative;
  throw DataError("unknown label '" + std::string(text) + "' (expected pos or neg)");
}

std::string_view to_string(TriggerPosition position) {
  switch (position) {
    case TriggerPosition::start:
      return "start";
    case TriggerPosition::end:
      return "end";
    case TriggerPosition::random:
      return "random";
  }
  return "end";
}

TriggerPosition parse_trigger_position(std::string_view text) {
  if (text == "start") return TriggerPosition::start;
  if (text == "end") return TriggerPosition::end;
  if (text == "random") return TriggerPosition::random;
  throw DataError("unknown trigger position '" + std::string(text) + "'");
}

void EmbeddingDataset::validate() const {
  if (embeddings.rows() < 1 || embeddings.cols() < 1)
    throw ConsistencyError("dataset must have at least one row and one dimension");
  const std::size_t m = rows();
  if (!labels.empty() && labels.size() != m)
    throw ConsistencyError("labels: " + std::to_string(labels.size()) + " entries for " +
                           std::to_string(m) + " rows");
  if (!poison_flags.empty() && poison_flags.size() != m)
    throw ConsistencyError("poison flags: " + std::to_string(poison_flags.size()) +
                           " entries for " + std::to_string(m) + " rows");
  if (ids.size() != m)
    throw ConsistencyError("ids: " + std::to_string(ids.size()) + " entries for " +
                           std::to_string(m) + " rows");
  if (!poison_flags.empty()) {
    if (labels.empty()) throw ConsistencyError("poison flags given without labels");
    for (std::size_t i = 0; i < m; ++i)
      if (poison_flags[i] && labels[i] != Label::positive)
        throw ConsistencyError("sample " + ids[i] + " is flagged poisoned but labeled neg");
  }
}

EmbeddingDataset EmbeddingDataset::subset(const std::vector<std::size_t>& rows_wanted) const {
  EmbeddingDataset out;
  out.embeddings.resize(static_cast<Eigen::Index>(rows_wanted.size()), embeddings.cols());
  for (std::size_t i = 0; i < rows_wanted.size(); ++i) {
    const auto r = rows_wanted[i];
    out.embeddings.row(static_cast<Eigen::Index>(i)) = embeddings.row(static_cast<Eigen::Index>(r));
    if (!labels.empty()) out.labels.push_back(labels[r]);
    if (!poison_flags.empty()) out.poison_flags.push_back(poison_flags[r]);
    out.ids.push_back(ids[r]);
  }
  return out;
}

std::vector<std::size_t> EmbeddingDataset::rows_with_label(Label label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

std::vector<std::string> default_ids(std::size_t m) {
  std::vector<std::string> ids;
  ids.reserve(m);
  for (std::size_t i = 0; i < m; ++i) ids.push_back(std::to_string(i));
  return ids;
}

// --- NCEB -------------------------------------------------------------------

void write_nceb(std::ostream& out, const EmbeddingMatrix& matrix) {
  if (!matrix.allFinite()) throw DataError("nceb: refusing to write NaN or Inf");
  out.write("NCEB", 4);
  put_le<std::uint32_t>(out, kNcebVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(matrix.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(matrix.cols()));
  for (Eigen::Index r = 0; r < matrix.rows(); ++r)
    for (Eigen::Index c = 0; c < matrix.cols(); ++c)
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(matrix(r, c)));
  if (!out) throw DataError("nceb: write failed");
}

EmbeddingMatrix read_nceb(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || std::string_view(magic.data(), 4) != "NCEB")
    throw FormatError("nceb: bad magic");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kNcebVersion)
    throw FormatError("nceb: unsupported version " + std::to_string(version));
  const auto m = get_le<std::uint64_t>(in, "m");
  const auto d = get_le<std::uint64_t>(in, "d");
  if (m == 0 || d == 0) throw FormatError("nceb: empty matrix declared");
  if (m > (1ULL << 40) / d) throw FormatError("nceb: implausible shape");

  EmbeddingMatrix matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  std::vector<unsigned char> bytes(m * d * 4);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
    throw FormatError("nceb: truncated payload");
  float* dst = matrix.data();
  for (std::size_t i = 0; i < m * d; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
    dst[i] = std::bit_cast<float>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("nceb: trailing bytes after payload");
  return matrix;
}

std::filesystem::path labels_sidecar_path(const std::filesystem::path& embeddings_path) {
  auto p = embeddings_path;
  p.replace_extension(".labels.csv");
  return p;
}

EmbeddingDataset load_embeddings(const std::filesystem::path& path) {
  EmbeddingDataset data = read_matrix_file(path);
  const auto sidecar = labels_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) attach_labels(data, sidecar);
  data.validate();
  return data;
}

EmbeddingDataset load_embeddings(const std::filesystem::path& path,
                                 const std::filesystem::path& labels_path) {
  if (!std::filesystem::exists(labels_path))
    throw DataError("labels file not found: " + labels_path.string());
  EmbeddingDataset data = read_matrix_file(path);
  attach_labels(data, labels_path);
  data.validate();
  return data;
}

void save_embeddings(const EmbeddingDataset& data, const std::filesystem::path& path) {
  if (!data.embeddings.allFinite()) throw DataError("refusing to serialize NaN or Inf");
  std::ostringstream buffer(std::ios::binary);
  write_nceb(buffer, data.embeddings);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const auto bytes = buffer.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

void save_labels(const EmbeddingDataset& data, const std::filesystem::path& path) {
  if (!data.has_labels()) throw DataError("dataset has no labels to save");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const bool flags = data.has_poison_flags();
  csv::write_row(out, flags ? csv::Row{"id", "label", "poisoned"} : csv::Row{"id", "label"});
  for (std::size_t i = 0; i < data.rows(); ++i) {
    csv::Row row{data.ids[i], std::string(to_string(data.labels[i]))};
    if (flags) row.push_back(data.poison_flags[i] ? "1" : "0");
    csv::write_row(out, row);
  }
}

void attach_labels(EmbeddingDataset& data, const std::filesystem::path& labels_path) {
  const auto rows = csv::read_file(labels_path);
  if (rows.empty()) throw FormatError("labels: empty file " + labels_path.string());
  const auto& header = rows.front();
  const int id_col = csv::find_column(header, "id");
  const int label_col = csv::find_column(header, "label");
  const int flag_col = csv::find_column(header, "poisoned");
  if (id_col < 0 || label_col < 0)
    throw FormatError("labels: header must contain id,label in " + labels_path.string());

  const std::size_t m = rows.size() - 1;
  if (m != data.rows())
    throw ConsistencyError("labels file lists " + std::to_string(m) + " samples, embeddings have " +
                           std::to_string(data.rows()));

  const bool check_ids = !is_default_ids(data.ids);
  std::vector<Label> labels;
  std::vector<std::uint8_t> flags;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& row = rows[i + 1];
    const auto need = static_cast<std::size_t>(std::max({id_col, label_col, flag_col})) + 1;
    if (row.size() < need)
      throw FormatError("labels: short line " + std::to_string(i + 2));
    if (check_ids && row[id_col] != data.ids[i])
      throw ConsistencyError("labels: id '" + row[id_col] + "' on line " + std::to_string(i + 2) +
                             " does not match embedding id '" + data.ids[i] + "'");
    ids.push_back(row[id_col]);
    labels.push_back(parse_label(row[label_col]));
    if (flag_col >= 0) {
      const auto& f = row[flag_col];
      if (f != "0" && f != "1") throw FormatError("labels: poisoned must be 0 or 1, got '" + f + "'");
      flags.push_back(f == "1" ? 1 : 0);
    }
  }
  data.ids = std::move(ids);
  data.labels = std::move(labels);
  data.poison_flags = std::move(flags);
}

// --- Transforms -------------------------------------------------------------

EmbeddingDataset NormalizationParams::apply(const EmbeddingDataset& data) const {
  if (static_cast<Eigen::Index>(data.dims()) != min.size())
    throw ConsistencyError("normalization params have " + std::to_string(min.size()) +
                           " dimensions, data has " + std::to_string(data.dims()));
  EmbeddingDataset out = data;
  for (Eigen::Index c = 0; c < min.size(); ++c) {
    const double lo = min[c];
    const double span = max[c] - lo;
    for (Eigen::Index r = 0; r < out.embeddings.rows(); ++r) {
      double v = 0.5;
      if (span > 0.0) v = std::clamp((static_cast<double>(data.embeddings(r, c)) - lo) / span, 0.0, 1.0);
      out.embeddings(r, c) = static_cast<float>(v);
    }
  }
  return out;
}

std::pair<EmbeddingDataset, NormalizationParams> normalize_minmax(const EmbeddingDataset& data) {
  if (data.rows() < 1) throw DataError("normalize: empty dataset");
  if (!data.embeddings.allFinite()) throw DataError("normalize: non-finite input");
  NormalizationParams params;
  params.min = data.embeddings.colwise().minCoeff().transpose().cast<double>();
  params.max = data.embeddings.colwise().maxCoeff().transpose().cast<double>();
  return {params.apply(data), params};
}

EmbeddingDataset synth_embeddings(const SynthSpec& spec) {
  const std::size_t m = spec.n_pos + spec.n_neg + spec.n_poison;
  if (m == 0) throw DataError("synth: zero samples requested");
  if (spec.dims < 2) throw DataError("synth: need at least 2 dimensions");
  if (spec.n_poison > spec.n_neg && spec.n_neg > 0)
    throw DataError("synth: more poisoned rows than negatives");

  Rng rng(derive_seed(spec.seed, "synth"));
  EmbeddingDataset data;
  data.embeddings.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(spec.dims));
  const double half = kSynthClassSeparation / 2.0;

  auto fill = [&](std::size_t row, double mean0, double shift1) {
    for (std::size_t c = 0; c < spec.dims; ++c) {
      double v = rng.normal();
      if (c == 0) v += mean0;
      if (c == 1) v += shift1;
      data.embeddings(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) =
          static_cast<float>(v);
    }
  };

  std::size_t row = 0;
  for (std::size_t i = 0; i < spec.n_pos; ++i, ++row) {
    fill(row, +half, 0.0);
    data.labels.push_back(Label::positive);
    data.poison_flags.push_back(0);
  }
  for (std::size_t i = 0; i < spec.n_neg; ++i, ++row) {
    fill(row, -half, 0.0);
    data.labels.push_back(Label::negative);
    data.poison_flags.push_back(0);
  }
  for (std::size_t i = 0; i < spec.n_poison; ++i, ++row) {
    fill(row, -half, spec.shift);
    data.labels.push_back(Label::positive);
    data.poison_flags.push_back(1);
  }
  data.ids = default_ids(m);
  return data;
}

Eigen::VectorXd hash_embed_counts(std::string_view text, std::size_t d) {
  if (d < 8) throw DataError("hash embedding needs d >= 8");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  std::istringstream tokens{std::string(text)};
  std::string token;
  while (tokens >> token) {
    const std::uint64_t h = fnv1a64(lowercase(token));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[static_cast<Eigen::Index>(h % d)] += sign;
  }
  return v;
}

Eigen::VectorXd hash_embed_text(std::string_view text, std::size_t d) {
  Eigen::VectorXd v = hash_embed_counts(text, d);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

}  // namespace ncdetect
